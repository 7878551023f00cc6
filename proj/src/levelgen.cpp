#include "sarl/levelgen.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "sarl/rng.hpp"

namespace sarl {

namespace {

// Minimum Chebyshev gap between cells of different patterns. Two empty cells
// between patterns guarantee no shared birth candidates.
constexpr int kPatternGap = 3;
constexpr int kPlacementTries = 60;

std::vector<Pos> parse_cells(std::initializer_list<const char*> rows, char mark) {
  std::vector<Pos> out;
  int r = 0;
  for (const char* row : rows) {
    for (int c = 0; row[c] != '\0'; ++c) {
      if (row[c] == mark) out.push_back({r, c});
    }
    ++r;
  }
  return out;
}

Pos transform(Pos p, int sym) {
  // sym in [0, 8): bit 2 = transpose, bits 0-1 = sign flips.
  int r = p.row, c = p.col;
  if (sym & 4) std::swap(r, c);
  if (sym & 1) r = -r;
  if (sym & 2) c = -c;
  return {r, c};
}

// Every distinct orientation of a template, normalized to a top-left origin.
void add_orientations(std::vector<PatternTemplate>& out, const std::string& name,
                      const std::vector<Pos>& cells, const std::vector<Pos>& completion = {}) {
  std::set<std::vector<Pos>> seen;
  for (int sym = 0; sym < 8; ++sym) {
    std::vector<Pos> tc, tk;
    for (Pos p : cells) tc.push_back(transform(p, sym));
    for (Pos p : completion) tk.push_back(transform(p, sym));
    int min_r = 1 << 20, min_c = 1 << 20;
    for (Pos p : tc) {
      min_r = std::min(min_r, p.row);
      min_c = std::min(min_c, p.col);
    }
    for (Pos& p : tc) p = {p.row - min_r, p.col - min_c};
    for (Pos& p : tk) p = {p.row - min_r, p.col - min_c};
    std::sort(tc.begin(), tc.end());
    std::vector<Pos> key = tc;
    key.insert(key.end(), tk.begin(), tk.end());
    if (seen.insert(key).second) out.push_back({name, tc, tk});
  }
}

int torus_delta(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

int chebyshev(const Board& b, Pos x, Pos y) {
  return std::max(torus_delta(x.row, y.row, b.height()), torus_delta(x.col, y.col, b.width()));
}

class LevelBuilder {
 public:
  LevelBuilder(const LevelSpec& spec, std::mt19937_64& eng) : spec_(spec), eng_(eng), board_(spec.width, spec.height) {
    board_.rng() = RngState{spec.seed, 0};
  }

  // Places a pattern at a random anchor keeping kPatternGap to everything
  // already placed. Returns false when no anchor was found.
  bool place(const PatternTemplate& t, CellKind kind, bool goal_on_completion) {
    for (int tries = 0; tries < kPlacementTries; ++tries) {
      const Pos anchor{static_cast<int>(uniform_index(eng_, spec_.height)),
                       static_cast<int>(uniform_index(eng_, spec_.width))};
      std::vector<Pos> cells, reserved;
      for (Pos p : t.cells) cells.push_back(board_.wrap({anchor.row + p.row, anchor.col + p.col}));
      for (Pos p : t.completion) reserved.push_back(board_.wrap({anchor.row + p.row, anchor.col + p.col}));
      std::vector<Pos> all = cells;
      all.insert(all.end(), reserved.begin(), reserved.end());
      if (!clear_of_others(all)) continue;
      for (Pos p : cells) board_.set(p, kind);
      if (goal_on_completion) {
        for (Pos p : reserved) board_.set_goal(p, true);
      }
      occupied_.insert(occupied_.end(), all.begin(), all.end());
      cell_count_ += static_cast<int>(cells.size());
      return true;
    }
    return false;
  }

  bool place_spawner() {
    for (int tries = 0; tries < kPlacementTries; ++tries) {
      const Pos p{static_cast<int>(uniform_index(eng_, spec_.height)),
                  static_cast<int>(uniform_index(eng_, spec_.width))};
      if (!clear_of_others({p})) continue;
      board_.set(p, CellKind::Spawner);
      occupied_.push_back(p);
      return true;
    }
    return false;
  }

  bool place_agent_and_exit() {
    std::vector<Pos> open, roomy;
    for (int r = 0; r < board_.height(); ++r) {
      for (int c = 0; c < board_.width(); ++c) {
        const Pos p{r, c};
        if (board_.at(p) != CellKind::Empty || board_.goal(p)) continue;
        open.push_back(p);
        bool near = false;
        for (Pos q : occupied_) near = near || chebyshev(board_, p, q) <= 1;
        if (!near) roomy.push_back(p);
      }
    }
    const std::vector<Pos>& pool = roomy.size() >= 2 ? roomy : open;
    if (pool.size() < 2) return false;
    const int min_dist = std::max(spec_.width, spec_.height) / 2;
    for (int tries = 0; tries < kPlacementTries; ++tries) {
      const Pos agent = pool[uniform_index(eng_, pool.size())];
      std::vector<Pos> exits;
      for (Pos p : pool) {
        if (torus_l1(board_, agent, p) >= min_dist) exits.push_back(p);
      }
      if (exits.empty()) continue;
      const Pos exit = exits[uniform_index(eng_, exits.size())];
      board_.set_agent(agent);
      board_.set(exit, CellKind::Exit);
      return true;
    }
    return false;
  }

  int cell_count() const { return cell_count_; }
  const Board& board() const { return board_; }

 private:
  bool clear_of_others(const std::vector<Pos>& cells) const {
    for (Pos p : cells) {
      for (Pos q : occupied_) {
        if (chebyshev(board_, p, q) < kPatternGap) return false;
      }
    }
    return true;
  }

  const LevelSpec& spec_;
  std::mt19937_64& eng_;
  Board board_;
  std::vector<Pos> occupied_;
  int cell_count_ = 0;
};

void validate(const LevelSpec& spec) {
  if (spec.width < 6 || spec.height < 6) throw std::invalid_argument("level must be at least 6x6");
  if (spec.n_pattern_cells < 0 || spec.n_goal_markers < 0 || spec.n_spawners < 0) {
    throw std::invalid_argument("level counts must be non-negative");
  }
  if (!spec.dynamic && spec.n_spawners != 0) {
    throw std::invalid_argument("still levels cannot have spawners");
  }
  if (spec.task == TaskKind::Prune && spec.n_pattern_cells < 1) {
    throw std::invalid_argument("prune levels need at least one pattern cell");
  }
  if (spec.task == TaskKind::Append && spec.n_goal_markers < 1) {
    throw std::invalid_argument("append levels need at least one goal marker");
  }
  const int budget = spec.width * spec.height;
  if (spec.n_pattern_cells + 6 * spec.n_goal_markers + spec.n_spawners + 2 > budget / 2) {
    throw std::invalid_argument("requested counts do not fit on the board");
  }
}

std::optional<Board> try_generate(const LevelSpec& spec, std::mt19937_64& eng) {
  LevelBuilder b(spec, eng);
  const auto& stills = still_life_templates();
  const auto& oscillators = oscillator_templates();
  auto pick_pattern = [&]() -> const PatternTemplate& {
    if (spec.dynamic && uniform01(eng) < 0.5) return oscillators[uniform_index(eng, oscillators.size())];
    return stills[uniform_index(eng, stills.size())];
  };

  if (spec.task == TaskKind::Append) {
    const auto& pre = append_precursor_templates();
    for (int i = 0; i < spec.n_goal_markers; ++i) {
      if (!b.place(pre[uniform_index(eng, pre.size())], CellKind::LifeGreen, true)) return std::nullopt;
    }
    while (b.cell_count() < spec.n_pattern_cells) {
      if (!b.place(pick_pattern(), CellKind::LifeGreen, false)) return std::nullopt;
    }
  } else {
    int placed = 0;
    while (b.cell_count() < spec.n_pattern_cells) {
      const CellKind kind = (placed % 2 == 0) ? CellKind::LifeRed : CellKind::LifeGreen;
      if (!b.place(pick_pattern(), kind, false)) return std::nullopt;
      ++placed;
    }
  }
  for (int i = 0; i < spec.n_spawners; ++i) {
    if (!b.place_spawner()) return std::nullopt;
  }
  if (!b.place_agent_and_exit()) return std::nullopt;

  Board level = b.board();
  if (!spec.dynamic) {
    Board agentless = level;
    agentless.set_agent(std::nullopt);
    if (!same_foreground(step_cells(agentless), agentless)) return std::nullopt;
  }
  if (spec.task == TaskKind::Prune && level.count(CellKind::LifeRed) < 1) return std::nullopt;
  if (spec.task == TaskKind::Append && level.goal_count() < 1) return std::nullopt;
  if (level.count(CellKind::Spawner) != spec.n_spawners) return std::nullopt;
  return level;
}

}  // namespace

const std::vector<PatternTemplate>& still_life_templates() {
  static const std::vector<PatternTemplate> kTemplates = [] {
    std::vector<PatternTemplate> out;
    add_orientations(out, "block", parse_cells({"XX", "XX"}, 'X'));
    add_orientations(out, "beehive", parse_cells({".XX.", "X..X", ".XX."}, 'X'));
    add_orientations(out, "loaf", parse_cells({".XX.", "X..X", ".X.X", "..X."}, 'X'));
    add_orientations(out, "boat", parse_cells({"XX.", "X.X", ".X."}, 'X'));
    return out;
  }();
  return kTemplates;
}

const std::vector<PatternTemplate>& oscillator_templates() {
  static const std::vector<PatternTemplate> kTemplates = [] {
    std::vector<PatternTemplate> out;
    add_orientations(out, "blinker", parse_cells({"XXX"}, 'X'));
    add_orientations(out, "toad", parse_cells({".XXX", "XXX."}, 'X'));
    return out;
  }();
  return kTemplates;
}

const std::vector<PatternTemplate>& append_precursor_templates() {
  static const std::vector<PatternTemplate> kTemplates = [] {
    std::vector<PatternTemplate> out;
    add_orientations(out, "tub", parse_cells({"*X.", "X.X", ".X."}, 'X'),
                     parse_cells({"*X.", "X.X", ".X."}, '*'));
    add_orientations(out, "boat", parse_cells({"XX.", "X.X", ".X*"}, 'X'),
                     parse_cells({"XX.", "X.X", ".X*"}, '*'));
    return out;
  }();
  return kTemplates;
}

int torus_l1(const Board& board, Pos a, Pos b) {
  return torus_delta(a.row, b.row, board.height()) + torus_delta(a.col, b.col, board.width());
}

Board generate_level(const LevelSpec& spec) {
  validate(spec);
  std::mt19937_64 eng(mix64(spec.seed));
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    if (auto level = try_generate(spec, eng)) return *std::move(level);
  }
  throw GenerationFailed("no valid level for seed " + std::to_string(spec.seed) + " after " +
                         std::to_string(kMaxGenerationAttempts) + " attempts");
}

std::vector<Board> build_test_bank(const LevelSpec& shape, int n, std::uint64_t base_seed) {
  if (n < 1) throw std::invalid_argument("test bank size must be at least 1");
  std::vector<Board> bank;
  bank.reserve(n);
  for (int i = 0; i < n; ++i) {
    LevelSpec spec = shape;
    spec.seed = base_seed + static_cast<std::uint64_t>(i);
    bank.push_back(generate_level(spec));
  }
  return bank;
}

void save_level(const std::filesystem::path& path, const Board& board) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_level(board);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Board load_level(const std::filesystem::path& path, std::uint64_t rng_seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_level(ss.str(), rng_seed);
}

void write_bank(const std::filesystem::path& dir, const std::vector<Board>& boards,
                std::uint64_t base_seed) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "path\tseed\n";
  for (std::size_t i = 0; i < boards.size(); ++i) {
    const std::uint64_t seed = base_seed + i;
    const std::string name = "level_" + std::to_string(seed) + ".txt";
    save_level(dir / name, boards[i]);
    manifest << name << '\t' << seed << '\n';
  }
  std::ofstream out(dir / kManifestName, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.str();
}

std::vector<BankEntry> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw std::runtime_error("missing manifest in " + dir.string());
  std::vector<BankEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream ls(line);
    BankEntry e;
    std::string name;
    if (!std::getline(ls, name, '\t') || !(ls >> e.seed)) {
      throw std::runtime_error("malformed manifest line " + std::to_string(line_no));
    }
    e.path = name;
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw std::runtime_error("empty manifest in " + dir.string());
  return entries;
}

std::vector<Board> load_bank(const std::filesystem::path& dir) {
  std::vector<Board> boards;
  for (const auto& e : read_manifest(dir)) boards.push_back(load_level(dir / e.path, e.seed));
  return boards;
}

}  // namespace sarl
