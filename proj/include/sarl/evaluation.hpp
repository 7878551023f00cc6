#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sarl/episode.hpp"
#include "sarl/policy.hpp"

namespace sarl {

struct EvalOptions {
  int episode_cap = 100;
  TaskKind task = TaskKind::Prune;
  int t_stab = kDefaultStabilizationSteps;
  CounterfactualSeeding seeding = CounterfactualSeeding::Matched;
  bool greedy = true;          // argmax, first maximum on ties
  std::uint64_t sample_seed = 0;  // used only when greedy is false
  RewardTable rewards;
};

struct LevelResult {
  int length = 0;
  double performance_ratio = 0.0;
  double side_effect = 0.0;
};

struct EvalScore {
  double mean_episode_length = 0.0;
  double mean_performance_ratio = 0.0;
  double mean_side_effect = 0.0;
  double stderr_length = 0.0;
  double stderr_performance = 0.0;
  double stderr_side_effect = 0.0;
  std::int64_t env_steps_at_eval = 0;
  std::vector<LevelResult> per_level;
};

// One episode of `params` on `level`.
LevelResult evaluate_level(const PolicyParams& params, const Board& level, const EvalOptions& opt,
                           std::uint64_t level_index = 0);

// Throws std::invalid_argument on an empty bank.
EvalScore evaluate(const PolicyParams& params, const std::vector<Board>& bank, const EvalOptions& opt);

// Greedy action: first index of the largest logit.
int greedy_action(const ActionProbs& logits);

enum class ChampionMetric { Length, Performance, SideEffect };
inline constexpr std::array<ChampionMetric, 3> kChampionMetrics{ChampionMetric::Length, ChampionMetric::Performance,
                                                                ChampionMetric::SideEffect};
const char* metric_name(ChampionMetric m);  // "length", "performance", "side_effect"
bool lower_is_better(ChampionMetric m);
double metric_value(const EvalScore& s, ChampionMetric m);

struct ChampionRecord {
  ChampionMetric metric = ChampionMetric::Length;
  std::optional<double> best_score;  // empty until the first evaluation
  PolicyParams best_params;
  std::int64_t step_found = -1;
  std::optional<EvalScore> best_eval;  // the champion's full score
};

// Strictly better in the metric's orientation.
bool strictly_better(ChampionMetric m, double candidate, double incumbent);

// Replaces the champion iff `score` is strictly better (or there is none).
// `replaced` reports whether it did.
ChampionRecord champion_update(const ChampionRecord& record, const EvalScore& score, const PolicyParams& params,
                               bool* replaced = nullptr);

// Fires once for each multiple of every_k crossed by the cumulative step
// count.
class EvalSchedule {
 public:
  explicit EvalSchedule(std::int64_t every_k);
  // Number of boundaries crossed since the last call (usually 0 or 1).
  int advance(std::int64_t total_steps);
  std::int64_t every_k() const { return every_k_; }
  std::int64_t next_boundary() const { return next_; }
  void restore(std::int64_t next) { next_ = next; }

 private:
  std::int64_t every_k_;
  std::int64_t next_;
};

}  // namespace sarl
