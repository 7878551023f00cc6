#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sarl/grid.hpp"

namespace sarl {

struct LevelSpec {
  TaskKind task = TaskKind::Prune;
  bool dynamic = false;
  int width = 10;
  int height = 10;
  std::uint64_t seed = 0;
  int n_pattern_cells = 8;
  int n_goal_markers = 1;  // append only
  int n_spawners = 0;      // dynamic only
};

class GenerationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxGenerationAttempts = 100;

// A small pattern template; cells are offsets from the pattern's top-left.
struct PatternTemplate {
  std::string name;
  std::vector<Pos> cells;
  // For append precursors: the one cell whose addition yields another still
  // life. Empty otherwise.
  std::vector<Pos> completion;
};

// Still lifes (block, beehive, loaf, boat) in every distinct orientation.
const std::vector<PatternTemplate>& still_life_templates();
// Period-2 oscillators (blinker, toad) used by dynamic levels.
const std::vector<PatternTemplate>& oscillator_templates();
// Still lifes that stay still when one marked cell is added (tub -> boat,
// boat -> ship). Append goal markers sit on the completion cell.
const std::vector<PatternTemplate>& append_precursor_templates();

// Throws std::invalid_argument on a malformed spec and GenerationFailed when
// no valid level is found within kMaxGenerationAttempts.
Board generate_level(const LevelSpec& spec);

// Levels for seeds base_seed .. base_seed + n - 1; other spec fields are taken
// from `shape`.
std::vector<Board> build_test_bank(const LevelSpec& shape, int n, std::uint64_t base_seed);

// Conventional seed ranges: training draws from [0, 10000), test banks start
// at 10000.
inline constexpr std::uint64_t kTrainSeedBegin = 0;
inline constexpr std::uint64_t kTrainSeedEnd = 10000;
inline constexpr std::uint64_t kTestSeedBase = 10000;

void save_level(const std::filesystem::path& path, const Board& board);
Board load_level(const std::filesystem::path& path, std::uint64_t rng_seed = 0);

struct BankEntry {
  std::filesystem::path path;  // relative to the manifest's directory
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// Writes one level file per board plus manifest.tsv into `dir`.
void write_bank(const std::filesystem::path& dir, const std::vector<Board>& boards,
                std::uint64_t base_seed);
std::vector<BankEntry> read_manifest(const std::filesystem::path& dir);
// Loads every level listed in the manifest; each board's spawner rng is
// re-seeded with its manifest seed.
std::vector<Board> load_bank(const std::filesystem::path& dir);

// Toroidal L1 distance.
int torus_l1(const Board& board, Pos a, Pos b);

}  // namespace sarl
