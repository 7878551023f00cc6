#pragma once

#include <string>
#include <vector>

#include "sarl/grid.hpp"

namespace sarl::test {

// Board from cell rows (and optional goal rows; none if empty).
inline Board board_from_rows(const std::vector<std::string>& rows, const std::vector<std::string>& goals = {},
                             std::uint64_t seed = 0) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows[0].size());
  std::string text = std::to_string(w) + " " + std::to_string(h) + "\n";
  for (const auto& r : rows) text += r + "\n";
  for (int i = 0; i < h; ++i) text += (goals.empty() ? std::string(w, '.') : goals[i]) + "\n";
  return parse_level(text, seed);
}

// Cell rows of a board, agent shown as 'A'.
inline std::vector<std::string> rows_of(const Board& b) {
  std::vector<std::string> out;
  const std::string text = format_level(b);
  std::size_t pos = text.find('\n') + 1;
  for (int r = 0; r < b.height(); ++r) {
    const std::size_t end = text.find('\n', pos);
    out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

}  // namespace sarl::test
