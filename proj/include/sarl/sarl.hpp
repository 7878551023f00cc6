#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sarl/distance.hpp"
#include "sarl/policy.hpp"
#include "sarl/ppo.hpp"

namespace sarl {

enum class DistanceKind { JensenShannon, WassersteinSinkhorn };
const char* distance_name(DistanceKind k);  // "js", "sinkhorn"
DistanceKind parse_distance(const std::string& s);

struct SarlConfig {
  double beta = 0.01;
  DistanceKind distance = DistanceKind::JensenShannon;
  double sinkhorn_epsilon = 0.05;
  int sinkhorn_iters = 200;
  CostMatrix cost_matrix = default_action_cost();
  bool zero_shot = false;
  std::optional<std::string> safe_checkpoint_path;

  // Throws std::invalid_argument.
  void validate() const;
};

struct DistanceResult {
  double value = 0.0;  // mean of per_state_values
  std::vector<double> per_state_values;
  int unconverged = 0;  // Sinkhorn states whose marginal violation exceeded the tolerance
};

// Distance between two action distributions under the configured metric.
// `d_p`, if non-empty, receives d/dp (p is the task agent's side).
double action_distance(const ActionProbs& p, const ActionProbs& q, const SarlConfig& cfg,
                       std::span<double> d_p = {}, bool* converged = nullptr);

// Per-state distance between task-agent outputs and (constant) safe-agent
// distributions. If `d_logits` is given it receives d(value)/d(task logits).
DistanceResult distance_from_outputs(std::span<const ForwardOutput> task_outs,
                                     std::span<const ActionProbs> safe_probs, const SarlConfig& cfg,
                                     std::vector<ActionProbs>* d_logits = nullptr);

// Both agents see the same states; nothing is differentiated through psi.
DistanceResult distance_loss(const PolicyParams& theta, const PolicyParams& psi,
                             std::span<const std::span<const double>> states, const SarlConfig& cfg);

inline double sarl_objective(const PpoLossBreakdown& ppo, const DistanceResult& dist, double beta) {
  return ppo.total + beta * dist.value;
}

struct ObjectiveResult {
  PpoLossBreakdown ppo;
  DistanceResult dist;
  double total = 0.0;
  std::vector<double> grad;  // with respect to theta
};

// PPO loss on the slice plus beta times the distance to psi on the same
// states. `psi` may be null (plain PPO).
ObjectiveResult sarl_objective_gradient(const PolicyParams& theta, const PolicyParams* psi,
                                        const TransitionBatch& batch, std::span<const std::size_t> indices,
                                        const PpoConfig& ppo, const SarlConfig& sarl);

// Loss only; used by finite-difference checks.
double sarl_objective_value(const PolicyParams& theta, const PolicyParams* psi, const TransitionBatch& batch,
                            std::span<const std::size_t> indices, const PpoConfig& ppo, const SarlConfig& sarl);

// Gradient of beta * L_dist alone with respect to theta.
LossAndGradient distance_gradient(const PolicyParams& theta, const PolicyParams& psi,
                                  std::span<const std::span<const double>> states, const SarlConfig& cfg);

}  // namespace sarl
