#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sarl/config.hpp"
#include "sarl/evaluation.hpp"
#include "sarl/ppo.hpp"

namespace sarl {

// One metrics.csv row per evaluation.
struct MetricsRow {
  std::int64_t env_steps = 0;
  std::optional<double> wall_time;  // seconds; only when run.record_wall_time is set
  std::string algorithm;
  std::string task;
  std::string variant;
  double mean_length = 0.0;
  double mean_perf_ratio = 0.0;
  double mean_side_effect = 0.0;
  double stderr_length = 0.0;
  double stderr_perf_ratio = 0.0;
  double stderr_side_effect = 0.0;
  std::array<bool, 3> champion{};  // replaced at this evaluation, in kChampionMetrics order
  double reg_weight = 0.0;         // beta (SARL), penalty weight (RewardPenalty), else 0
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& r);

// Diagnostics from the latest iteration.
struct IterationStats {
  PpoLossBreakdown task_loss;  // last minibatch
  double distance = 0.0;       // last minibatch, SARL only
  int sinkhorn_unconverged = 0;
  PpoLossBreakdown safe_loss;
};

// The co-training loop (and the two baselines) driven by a RunConfig. The task agent
// theta trains on task rewards (penalized for RewardPenalty, regularized
// toward psi for SARL); the safe agent psi trains on safety rewards in its
// own environments unless it was loaded frozen for zero-shot use.
class Trainer {
 public:
  // `test_bank` is the fixed evaluation bank. Throws ConfigError and
  // CheckpointError.
  Trainer(RunConfig cfg, std::vector<Board> test_bank);

  // One task phase and, when applicable, one safe phase.
  void iterate();

  // Iterates until total_env_steps, evaluating on the schedule. With a run
  // directory, appends metrics rows, writes champion checkpoints and a
  // resume state after each evaluation, and final checkpoints at the end.
  void run(const std::optional<std::filesystem::path>& run_dir = std::nullopt);

  // Runs one evaluation now and updates the champions.
  MetricsRow evaluate_now();

  const RunConfig& config() const { return cfg_; }
  const PolicyParams& theta() const { return theta_; }
  const std::optional<PolicyParams>& psi() const { return psi_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t updates() const { return updates_; }
  std::int64_t iterations() const { return iterations_; }
  const std::array<ChampionRecord, 3>& champions() const { return champions_; }
  const std::vector<MetricsRow>& rows() const { return rows_; }
  const IterationStats& last_stats() const { return stats_; }
  bool has_safe_phase() const;

  // The loss the safe phase minimizes for a given psi on its own batch.
  PpoLossResult safe_objective(const PolicyParams& psi, const TransitionBatch& batch,
                               std::span<const std::size_t> indices) const;

  // Called after every optimizer step on theta.
  std::function<void(const PolicyParams&)> on_theta_update;

  void save_state(const std::filesystem::path& dir) const;
  // Restores a state written by save_state into a trainer built from the
  // same config and bank.
  void load_state(const std::filesystem::path& dir);

  // A short text dump for numerical-abort diagnostics.
  std::string diagnostic() const;

 private:
  void task_phase();
  void safe_phase();
  void write_eval_outputs(const std::filesystem::path& dir, const MetricsRow& row) const;

  RunConfig cfg_;
  std::vector<Board> bank_;
  EvalOptions eval_opt_;

  PolicyParams theta_;
  Adam adam_theta_;
  EnvPool task_envs_;
  std::mt19937_64 rollout_rng_;
  std::mt19937_64 minibatch_rng_;

  std::optional<PolicyParams> psi_;
  Adam adam_psi_;
  std::optional<EnvPool> safe_envs_;
  std::mt19937_64 safe_rollout_rng_;
  std::mt19937_64 safe_minibatch_rng_;

  EvalSchedule schedule_;
  std::array<ChampionRecord, 3> champions_;
  std::vector<MetricsRow> rows_;
  std::int64_t env_steps_ = 0;
  std::int64_t updates_ = 0;
  std::int64_t iterations_ = 0;
  IterationStats stats_;
  double wall_offset_ = 0.0;  // seconds accumulated before a resume
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Run directory layout.
inline constexpr const char* kConfigSnapshotName = "config.ini";
inline constexpr const char* kMetricsName = "metrics.csv";
inline constexpr const char* kResumeDirName = "resume";
std::filesystem::path champion_path(const std::filesystem::path& run_dir, ChampionMetric m);

// The evaluation bank for a config: loaded from test_bank.dir when set,
// otherwise generated from (test_bank.n, test_bank.base_seed).
std::vector<Board> test_bank_for(const RunConfig& cfg);

}  // namespace sarl
