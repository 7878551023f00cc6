#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sarl {

enum class CellKind : std::uint8_t {
  Empty = 0,
  Wall,
  Exit,
  Spawner,
  LifeGreen,
  LifeRed,
  LifeGray,
};
inline constexpr int kNumCellKinds = 7;

constexpr bool is_living(CellKind k) {
  return k == CellKind::LifeGreen || k == CellKind::LifeRed || k == CellKind::LifeGray;
}

// Indices are part of the checkpoint/transcript contract; do not reorder.
enum class Action : std::uint8_t {
  Noop = 0,
  MoveUp,
  MoveDown,
  MoveLeft,
  MoveRight,
  ToggleUp,
  ToggleDown,
  ToggleLeft,
  ToggleRight,
};
inline constexpr int kNumActions = 9;

constexpr bool is_move(Action a) { return a >= Action::MoveUp && a <= Action::MoveRight; }
constexpr bool is_toggle(Action a) { return a >= Action::ToggleUp; }
const char* action_name(Action a);
// Accepts an action name or its index.
Action parse_action(std::string_view s);

enum class TaskKind : std::uint8_t { Prune, Append };
const char* task_name(TaskKind t);
TaskKind parse_task(std::string_view s);

struct Pos {
  int row = 0;
  int col = 0;
  auto operator<=>(const Pos&) const = default;
};

// Spawner randomness is counter based: every draw is a hash of
// (seed, tick, cell index), so two boards with the same seed make identical
// coin flips regardless of what else happened on them.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t tick = 0;
  bool operator==(const RngState&) const = default;
};

// Toroidal two-layer grid: foreground cells plus a background of goal
// markers, and an optional agent. Value type; copying is the intended way to
// branch a trajectory.
class Board {
 public:
  Board() = default;
  Board(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ * height_; }

  int index(int row, int col) const { return wrap_row(row) * width_ + wrap_col(col); }
  int index(Pos p) const { return index(p.row, p.col); }
  Pos pos_of(int idx) const { return {idx / width_, idx % width_}; }
  Pos wrap(Pos p) const { return {wrap_row(p.row), wrap_col(p.col)}; }

  CellKind at(int row, int col) const { return cells_[index(row, col)]; }
  CellKind at(Pos p) const { return cells_[index(p)]; }
  void set(int row, int col, CellKind k) { cells_[index(row, col)] = k; }
  void set(Pos p, CellKind k) { cells_[index(p)] = k; }

  bool goal(int row, int col) const { return goals_[index(row, col)] != 0; }
  bool goal(Pos p) const { return goals_[index(p)] != 0; }
  void set_goal(Pos p, bool on) { goals_[index(p)] = on ? 1 : 0; }

  const std::vector<CellKind>& cells() const { return cells_; }
  std::vector<CellKind>& mutable_cells() { return cells_; }
  const std::vector<std::uint8_t>& goals() const { return goals_; }

  const std::optional<Pos>& agent() const { return agent_; }
  void set_agent(std::optional<Pos> p) { agent_ = p ? std::optional<Pos>(wrap(*p)) : std::nullopt; }

  const RngState& rng() const { return rng_; }
  RngState& rng() { return rng_; }

  int count(CellKind k) const;
  int goal_count() const;
  int covered_goal_count() const;  // goal markers under a living LifeGray cell

  bool operator==(const Board&) const = default;

 private:
  int wrap_row(int r) const { return ((r % height_) + height_) % height_; }
  int wrap_col(int c) const { return ((c % width_) + width_) % width_; }

  int width_ = 0;
  int height_ = 0;
  std::vector<CellKind> cells_;
  std::vector<std::uint8_t> goals_;
  std::optional<Pos> agent_;
  RngState rng_;
};

// Foreground equality only (ignores goals, agent and rng).
bool same_foreground(const Board& a, const Board& b);

inline constexpr double kSpawnProbability = 0.3;

// One synchronous Life update followed by spawner placement. Advances the
// board's rng tick by one.
Board step_cells(const Board& board);

struct ActionEvents {
  std::array<int, kNumCellKinds> destroyed{};  // indexed by CellKind
  bool moved = false;
  bool created = false;
  bool reached_exit = false;
  bool empty() const;
};

Board apply_action(const Board& board, Action action, ActionEvents* events = nullptr);

struct StepEvents {
  int red_removed = 0;   // positions red before the step and not red after
  int red_born = 0;      // positions not red before the step and red after
  int goals_gained = 0;  // change in covered goal markers (may be negative)
  bool reached_exit = false;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  StepEvents events;
};

struct RewardTable {
  double per_red = 1.0;
  double per_goal = 1.0;
  double exit_bonus = 1.0;
  double step_cost = 0.01;
};

class EpisodeDone : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Task-material part of the reward (no step cost or exit bonus).
double task_material_reward(TaskKind task, const StepEvents& ev, const RewardTable& table = {});

// Act, then run the automaton, then score. `t` is the number of steps already
// taken in the episode; throws EpisodeDone when t >= cap or the agent already
// stands on the exit.
std::pair<Board, StepOutcome> env_step(const Board& board, Action action, TaskKind task, int t,
                                       int episode_cap, const RewardTable& table = {});

// Channel order: Empty, Wall, Exit, Spawner, LifeGreen, LifeRed, LifeGray,
// goal marker, agent. Layout is [channel][row][col].
inline constexpr int kObsChannels = 9;
inline constexpr int kGoalChannel = 7;
inline constexpr int kAgentChannel = 8;

struct Observation {
  int channels = kObsChannels;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int ch, int row, int col) const { return data[(ch * height + row) * width + col]; }
};

Observation observe(const Board& board);
void observe_into(const Board& board, std::span<double> out);

// Level text format.
class LevelParseError : public std::runtime_error {
 public:
  LevelParseError(int line, int column, const std::string& what);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

Board parse_level(std::string_view text, std::uint64_t rng_seed = 0);
std::string format_level(const Board& board);

// Single-layer ASCII rendering used by transcripts; agent drawn as 'A'.
std::string render_board(const Board& board);

}  // namespace sarl
