#include "sarl/grid.hpp"

#include <algorithm>
#include <sstream>

#include "sarl/rng.hpp"

namespace sarl {

namespace {

constexpr std::array<Pos, 8> kMoore = {{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1},
}};

Pos direction_of(Action a) {
  switch (a) {
    case Action::MoveUp:
    case Action::ToggleUp:
      return {-1, 0};
    case Action::MoveDown:
    case Action::ToggleDown:
      return {1, 0};
    case Action::MoveLeft:
    case Action::ToggleLeft:
      return {0, -1};
    case Action::MoveRight:
    case Action::ToggleRight:
      return {0, 1};
    case Action::Noop:
      break;
  }
  return {0, 0};
}

// Kind of a newborn cell given its three living parents.
CellKind birth_kind(int green, int red, int gray) {
  if (green >= 2) return CellKind::LifeGreen;
  if (red >= 2) return CellKind::LifeRed;
  if (gray >= 2) return CellKind::LifeGray;
  return CellKind::LifeRed;  // one of each: Red beats Gray
}

char cell_char(CellKind k) {
  switch (k) {
    case CellKind::Empty: return '.';
    case CellKind::Wall: return '#';
    case CellKind::Exit: return 'E';
    case CellKind::Spawner: return 'S';
    case CellKind::LifeGreen: return 'g';
    case CellKind::LifeRed: return 'r';
    case CellKind::LifeGray: return 'y';
  }
  return '?';
}

std::optional<CellKind> kind_from_char(char c) {
  switch (c) {
    case '.': return CellKind::Empty;
    case '#': return CellKind::Wall;
    case 'E': return CellKind::Exit;
    case 'S': return CellKind::Spawner;
    case 'g': return CellKind::LifeGreen;
    case 'r': return CellKind::LifeRed;
    case 'y': return CellKind::LifeGray;
    default: return std::nullopt;
  }
}

}  // namespace

const char* action_name(Action a) {
  static constexpr const char* kNames[kNumActions] = {
      "noop", "up", "down", "left", "right", "toggle-up", "toggle-down", "toggle-left", "toggle-right",
  };
  return kNames[static_cast<int>(a)];
}

Action parse_action(std::string_view s) {
  for (int a = 0; a < kNumActions; ++a) {
    if (s == action_name(static_cast<Action>(a)) || s == std::to_string(a)) return static_cast<Action>(a);
  }
  throw std::invalid_argument("unknown action '" + std::string(s) + "'");
}

const char* task_name(TaskKind t) { return t == TaskKind::Prune ? "prune" : "append"; }

TaskKind parse_task(std::string_view s) {
  if (s == "prune") return TaskKind::Prune;
  if (s == "append") return TaskKind::Append;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

Board::Board(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("board dimensions must be positive");
  cells_.assign(static_cast<std::size_t>(width) * height, CellKind::Empty);
  goals_.assign(cells_.size(), 0);
}

int Board::count(CellKind k) const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), k));
}

int Board::goal_count() const {
  return static_cast<int>(std::count(goals_.begin(), goals_.end(), std::uint8_t{1}));
}

int Board::covered_goal_count() const {
  int n = 0;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (goals_[i] && cells_[i] == CellKind::LifeGray) ++n;
  }
  return n;
}

bool same_foreground(const Board& a, const Board& b) {
  return a.width() == b.width() && a.height() == b.height() && a.cells() == b.cells();
}

Board step_cells(const Board& board) {
  Board next = board;
  const int h = board.height();
  const int w = board.width();
  const int agent_idx = board.agent() ? board.index(*board.agent()) : -1;

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int idx = r * w + c;
      const CellKind cur = board.cells()[idx];
      if (idx == agent_idx || cur == CellKind::Wall || cur == CellKind::Exit ||
          cur == CellKind::Spawner) {
        continue;
      }
      int green = 0, red = 0, gray = 0;
      for (const Pos d : kMoore) {
        switch (board.at(r + d.row, c + d.col)) {
          case CellKind::LifeGreen: ++green; break;
          case CellKind::LifeRed: ++red; break;
          case CellKind::LifeGray: ++gray; break;
          default: break;
        }
      }
      const int living = green + red + gray;
      if (is_living(cur)) {
        if (living < 2 || living > 3) next.mutable_cells()[idx] = CellKind::Empty;
      } else if (living == 3) {
        next.mutable_cells()[idx] = birth_kind(green, red, gray);
      }
    }
  }

  const RngState rs = board.rng();
  std::vector<int> free;
  for (int idx = 0; idx < board.size(); ++idx) {
    if (board.cells()[idx] != CellKind::Spawner) continue;
    const std::uint64_t key = hash_combine(hash_combine(rs.seed, rs.tick), static_cast<std::uint64_t>(idx));
    if (unit_double(mix64(key)) >= kSpawnProbability) continue;
    const Pos p = board.pos_of(idx);
    free.clear();
    for (const Pos d : kMoore) {
      const int n = next.index(p.row + d.row, p.col + d.col);
      if (next.cells()[n] == CellKind::Empty && n != agent_idx &&
          std::find(free.begin(), free.end(), n) == free.end()) {
        free.push_back(n);
      }
    }
    if (free.empty()) continue;
    const double u = unit_double(mix64(key ^ 0xA5A5A5A5A5A5A5A5ULL));
    const auto pick = static_cast<std::size_t>(u * static_cast<double>(free.size())) % free.size();
    next.mutable_cells()[free[pick]] = CellKind::LifeGreen;
  }
  next.rng().tick = rs.tick + 1;
  return next;
}

bool ActionEvents::empty() const {
  return !moved && !created && !reached_exit &&
         std::all_of(destroyed.begin(), destroyed.end(), [](int n) { return n == 0; });
}

Board apply_action(const Board& board, Action action, ActionEvents* events) {
  ActionEvents ev;
  Board next = board;
  if (action != Action::Noop && board.agent()) {
    const Pos here = *board.agent();
    const Pos d = direction_of(action);
    const Pos target = board.wrap({here.row + d.row, here.col + d.col});
    const CellKind k = board.at(target);
    if (is_move(action)) {
      if (k != CellKind::Wall && k != CellKind::Spawner) {
        if (is_living(k)) {
          ++ev.destroyed[static_cast<int>(k)];
          next.set(target, CellKind::Empty);
        }
        next.set_agent(target);
        ev.moved = true;
        ev.reached_exit = (k == CellKind::Exit);
      }
    } else if (k == CellKind::Empty) {
      next.set(target, CellKind::LifeGray);
      ev.created = true;
    } else if (is_living(k)) {
      ++ev.destroyed[static_cast<int>(k)];
      next.set(target, CellKind::Empty);
    }
  }
  if (events) *events = ev;
  return next;
}

double task_material_reward(TaskKind task, const StepEvents& ev, const RewardTable& table) {
  if (task == TaskKind::Prune) return table.per_red * (ev.red_removed - ev.red_born);
  return table.per_goal * ev.goals_gained;
}

std::pair<Board, StepOutcome> env_step(const Board& board, Action action, TaskKind task, int t,
                                       int episode_cap, const RewardTable& table) {
  if (t >= episode_cap) throw EpisodeDone("episode cap already reached");
  if (board.agent() && board.at(*board.agent()) == CellKind::Exit) {
    throw EpisodeDone("agent already left through the exit");
  }
  ActionEvents act;
  Board next = step_cells(apply_action(board, action, &act));

  StepOutcome out;
  for (int i = 0; i < board.size(); ++i) {
    const bool was_red = board.cells()[i] == CellKind::LifeRed;
    const bool is_red = next.cells()[i] == CellKind::LifeRed;
    out.events.red_removed += (was_red && !is_red);
    out.events.red_born += (!was_red && is_red);
  }
  out.events.goals_gained = next.covered_goal_count() - board.covered_goal_count();
  out.events.reached_exit = act.reached_exit;
  out.reward = task_material_reward(task, out.events, table) - table.step_cost;
  if (act.reached_exit) out.reward += table.exit_bonus;
  out.done = act.reached_exit || t + 1 >= episode_cap;
  return {std::move(next), out};
}

void observe_into(const Board& board, std::span<double> out) {
  const int n = board.size();
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < n; ++i) {
    out[static_cast<int>(board.cells()[i]) * n + i] = 1.0;
    if (board.goals()[i]) out[kGoalChannel * n + i] = 1.0;
  }
  if (board.agent()) out[kAgentChannel * n + board.index(*board.agent())] = 1.0;
}

Observation observe(const Board& board) {
  Observation obs;
  obs.height = board.height();
  obs.width = board.width();
  obs.data.assign(static_cast<std::size_t>(kObsChannels) * board.size(), 0.0);
  observe_into(board, obs.data);
  return obs;
}

LevelParseError::LevelParseError(int line, int column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

Board parse_level(std::string_view text, std::uint64_t rng_seed) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char ch : text) {
      if (ch == '\n') {
        if (!cur.empty() && cur.back() == '\r') cur.pop_back();
        lines.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
  }
  if (lines.empty()) throw LevelParseError(1, 1, "empty level file");

  int w = 0, h = 0;
  {
    std::istringstream hdr(lines[0]);
    std::string extra;
    if (!(hdr >> w >> h) || (hdr >> extra)) {
      throw LevelParseError(1, 1, "expected header 'W H'");
    }
    if (w <= 0 || h <= 0) throw LevelParseError(1, 1, "dimensions must be positive");
  }
  if (static_cast<int>(lines.size()) < 1 + 2 * h) {
    throw LevelParseError(static_cast<int>(lines.size()) + 1, 1,
                          "expected " + std::to_string(2 * h) + " grid rows after the header");
  }
  for (std::size_t i = 1 + 2 * static_cast<std::size_t>(h); i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") != std::string::npos) {
      throw LevelParseError(static_cast<int>(i) + 1, 1, "unexpected trailing content");
    }
  }

  Board b(w, h);
  b.rng() = RngState{rng_seed, 0};
  for (int r = 0; r < h; ++r) {
    const std::string& row = lines[1 + r];
    const int line_no = 2 + r;
    if (static_cast<int>(row.size()) != w) {
      throw LevelParseError(line_no, 1, "cell row " + std::to_string(r) + " has width " +
                                            std::to_string(row.size()) + ", expected " +
                                            std::to_string(w));
    }
    for (int c = 0; c < w; ++c) {
      if (row[c] == 'A') {
        if (b.agent()) throw LevelParseError(line_no, c + 1, "second agent");
        b.set_agent(Pos{r, c});
        continue;
      }
      const auto k = kind_from_char(row[c]);
      if (!k) throw LevelParseError(line_no, c + 1, std::string("unknown cell '") + row[c] + "'");
      b.set(r, c, *k);
    }
  }
  for (int r = 0; r < h; ++r) {
    const std::string& row = lines[1 + h + r];
    const int line_no = 2 + h + r;
    if (static_cast<int>(row.size()) != w) {
      throw LevelParseError(line_no, 1, "goal row " + std::to_string(r) + " has width " +
                                            std::to_string(row.size()) + ", expected " +
                                            std::to_string(w));
    }
    for (int c = 0; c < w; ++c) {
      if (row[c] != '.' && row[c] != '*') {
        throw LevelParseError(line_no, c + 1, std::string("unknown goal marker '") + row[c] + "'");
      }
      b.set_goal(Pos{r, c}, row[c] == '*');
    }
  }
  return b;
}

std::string format_level(const Board& board) {
  std::string out = std::to_string(board.width()) + " " + std::to_string(board.height()) + "\n";
  for (int r = 0; r < board.height(); ++r) {
    for (int c = 0; c < board.width(); ++c) {
      const bool agent_here = board.agent() && *board.agent() == Pos{r, c};
      out.push_back(agent_here ? 'A' : cell_char(board.at(r, c)));
    }
    out.push_back('\n');
  }
  for (int r = 0; r < board.height(); ++r) {
    for (int c = 0; c < board.width(); ++c) out.push_back(board.goal(r, c) ? '*' : '.');
    out.push_back('\n');
  }
  return out;
}

std::string render_board(const Board& board) {
  std::string out;
  for (int r = 0; r < board.height(); ++r) {
    for (int c = 0; c < board.width(); ++c) {
      const CellKind k = board.at(r, c);
      char ch = cell_char(k);
      if (board.goal(r, c)) ch = (k == CellKind::LifeGray) ? 'Y' : (k == CellKind::Empty ? '*' : ch);
      if (board.agent() && *board.agent() == Pos{r, c}) ch = 'A';
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace sarl
