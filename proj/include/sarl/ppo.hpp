#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "sarl/episode.hpp"
#include "sarl/levelgen.hpp"
#include "sarl/policy.hpp"

namespace sarl {

struct Transition {
  std::vector<double> observation;
  int action = 0;
  double log_prob = 0.0;       // under the behaviour policy
  double reward = 0.0;         // task reward r
  double safety_reward = 0.0;  // s
  double train_reward = 0.0;   // whichever signal the learner optimizes
  double value = 0.0;          // V(s) under the behaviour policy
  bool done = false;
};

// Transitions are stored env-major: env e, step k at index e * steps + k.
struct TransitionBatch {
  std::vector<Transition> transitions;
  int n_envs = 0;
  int steps = 0;
  std::vector<double> bootstrap_values;  // V of each env's state after the last step
  std::vector<double> raw_advantages;
  std::vector<double> advantages;  // normalized over the batch
  std::vector<double> returns;

  std::size_t size() const { return transitions.size(); }
};

enum class RewardChannel { Task, Safety };

struct PpoConfig {
  double gamma = 0.97;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double value_clip = 0.2;
  double value_coef = 0.5;    // c1
  double entropy_coef = 0.01;  // c2
  double entropy_clip = 1.0;
  double lr = 3e-4;
  int batch_size = 64;
  int epochs = 3;
  int steps_per_iter = 20;

  // Throws std::invalid_argument.
  void validate() const;
};

struct PpoLossBreakdown {
  double total = 0.0;  // -clip_term + c1 * value_term - c2 * entropy_term
  double clip_term = 0.0;
  double value_term = 0.0;
  double entropy_term = 0.0;
};

// A set of training environments that regenerate levels when episodes end.
// Level seeds are drawn uniformly from [seed_begin, seed_end).
class EnvPool {
 public:
  struct Options {
    LevelSpec shape;
    int n_envs = 16;
    int episode_cap = 100;
    std::uint64_t seed_begin = kTrainSeedBegin;
    std::uint64_t seed_end = kTrainSeedEnd;
    CounterfactualSeeding seeding = CounterfactualSeeding::Matched;
    RewardTable rewards;
    // When non-empty, episodes start from these boards (chosen uniformly)
    // instead of generated levels.
    std::vector<Board> levels;
  };

  EnvPool() = default;
  // `stream_seed` drives level-seed selection only.
  EnvPool(Options options, std::uint64_t stream_seed);

  int size() const { return static_cast<int>(episodes_.size()); }
  const Episode& episode(int i) const { return episodes_[i]; }
  const Options& options() const { return options_; }

  // Steps env i; if the episode finishes, starts a fresh level.
  EpisodeStep step(int i, Action action);

  // Completed episode count and their summed total reward (diagnostics).
  std::int64_t episodes_finished() const { return finished_; }
  double finished_reward_sum() const { return finished_reward_; }

  // Serialization for resume.
  struct State {
    std::string level_rng;
    std::vector<std::uint64_t> level_seeds;
    std::vector<Episode> episodes;
    std::int64_t finished = 0;
    double finished_reward = 0.0;
  };
  State state() const;
  void restore(const State& s);

 private:
  Episode fresh_episode(std::uint64_t* seed_out);
  const Board& level_for(std::uint64_t seed);

  Options options_;
  std::mt19937_64 level_rng_;
  std::vector<Episode> episodes_;
  std::vector<std::uint64_t> level_seeds_;
  std::map<std::uint64_t, Board> cache_;
  std::int64_t finished_ = 0;
  double finished_reward_ = 0.0;
};

// Inverse-CDF draw from a probability vector.
int sample_action(const ActionProbs& probs, std::mt19937_64& rng);

// r_t - weight * max(0, impact increase); the increase is -s.
inline double penalized_reward(double r, double s, double weight) {
  return r - weight * std::max(0.0, -s);
}

// Runs every env n_steps times with actions sampled from the policy. Both r
// and s are recorded; train_reward follows `channel`, with the task channel
// optionally penalized by `penalty_weight`.
TransitionBatch collect_rollout(const PolicyParams& params, EnvPool& envs, int n_steps, RewardChannel channel,
                                std::mt19937_64& rng, double penalty_weight = 0.0);

// GAE over train_reward; fills raw_advantages, returns (= raw A + V) and
// advantages normalized to zero mean and unit variance. Throws
// std::invalid_argument on an empty batch.
void compute_advantages(TransitionBatch& batch, double gamma, double lambda);

// Loss on a slice of the batch given the new forward outputs. `d_logits` and
// `d_value` receive the derivative of breakdown.total (a mean over the slice).
PpoLossBreakdown ppo_head_loss(std::span<const ForwardOutput> outs, const TransitionBatch& batch,
                               std::span<const std::size_t> indices, const PpoConfig& cfg,
                               std::vector<ActionProbs>* d_logits = nullptr,
                               std::vector<double>* d_value = nullptr);

struct PpoLossResult {
  PpoLossBreakdown breakdown;
  std::vector<double> grad;
};

// Forward + loss + backward on the given indices. Throws NonFiniteLoss.
PpoLossResult ppo_loss(const PolicyParams& params, const TransitionBatch& batch,
                       std::span<const std::size_t> indices, const PpoConfig& cfg);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One update in place; bumps params.version.
  void step(PolicyParams& params, std::span<const double> grad);

  std::uint64_t steps() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t);
  double lr() const { return lr_; }

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Minibatch order for one epoch: a shuffled permutation split into chunks of
// batch_size (the last chunk may be short).
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, int batch_size, std::mt19937_64& rng);

}  // namespace sarl
