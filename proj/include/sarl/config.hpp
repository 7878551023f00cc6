#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sarl/levelgen.hpp"
#include "sarl/policy.hpp"
#include "sarl/ppo.hpp"
#include "sarl/safety.hpp"
#include "sarl/sarl.hpp"

namespace sarl {

enum class Algorithm { PlainPPO, RewardPenalty, SARL };
const char* algorithm_name(Algorithm a);  // "ppo", "penalty", "sarl"
Algorithm parse_algorithm(const std::string& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultPenaltyWeight = 0.3;
inline constexpr double kDefaultSarlBeta = 0.01;
inline constexpr double kDefaultZeroShotBeta = 0.005;

struct RunConfig {
  // [run]
  Algorithm algorithm = Algorithm::PlainPPO;
  std::uint64_t master_seed = 0;
  std::int64_t total_env_steps = 500000;
  std::int64_t eval_every = 50000;
  int n_envs = 16;
  int episode_cap = 100;
  bool record_wall_time = false;

  // [level]
  LevelSpec level;  // seed unused
  std::uint64_t train_seed_begin = kTrainSeedBegin;
  std::uint64_t train_seed_end = kTrainSeedEnd;
  CounterfactualSeeding seeding = CounterfactualSeeding::Matched;

  // [test_bank]
  int test_n = 50;
  std::uint64_t test_base_seed = kTestSeedBase;
  std::string test_dir;  // load the bank from here instead of generating it

  PpoConfig ppo;  // [ppo]

  // [network]
  std::vector<int> hidden{64, 64};
  bool egocentric = true;

  SarlConfig sarl;  // [sarl]

  double penalty_weight = kDefaultPenaltyWeight;  // [penalty]

  // [safety]
  int t_stab = kDefaultStabilizationSteps;

  // [eval]
  bool eval_greedy = true;

  Architecture architecture() const;
  // Throws ConfigError.
  void validate() const;
  // beta for SARL, penalty weight for RewardPenalty, 0 otherwise.
  double regularization_weight() const;
  bool operator==(const RunConfig&) const;
};

struct ParsedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

// INI text with [section] headers and key = value lines, then
// "section.key=value" overrides. Unknown sections or keys are errors;
// settings the chosen algorithm ignores produce warnings. Throws ConfigError.
ParsedConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ParsedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Fully resolved config; parse_config(format_config(c)).config == c.
std::string format_config(const RunConfig& c);

}  // namespace sarl
