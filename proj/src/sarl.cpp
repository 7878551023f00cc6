#include "sarl/sarl.hpp"

#include <cmath>
#include <stdexcept>

namespace sarl {

const char* distance_name(DistanceKind k) {
  return k == DistanceKind::JensenShannon ? "js" : "sinkhorn";
}

DistanceKind parse_distance(const std::string& s) {
  if (s == "js" || s == "jensen-shannon") return DistanceKind::JensenShannon;
  if (s == "sinkhorn" || s == "wasserstein") return DistanceKind::WassersteinSinkhorn;
  throw std::invalid_argument("unknown distance '" + s + "' (expected js or sinkhorn)");
}

void SarlConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("sarl.beta must be finite and >= 0");
  if (!(sinkhorn_epsilon > 0.0) || !std::isfinite(sinkhorn_epsilon)) {
    throw std::invalid_argument("sarl.sinkhorn_epsilon must be positive");
  }
  if (sinkhorn_iters < 1) throw std::invalid_argument("sarl.sinkhorn_iters must be at least 1");
  if (cost_matrix.n != kNumActions || !cost_matrix.valid()) {
    throw std::invalid_argument("sarl.cost_matrix must be 9x9, symmetric, non-negative, zero diagonal");
  }
  if (zero_shot && (!safe_checkpoint_path || safe_checkpoint_path->empty())) {
    throw std::invalid_argument("sarl.zero_shot requires sarl.safe_checkpoint");
  }
}

double action_distance(const ActionProbs& p, const ActionProbs& q, const SarlConfig& cfg, std::span<double> d_p,
                       bool* converged) {
  if (converged) *converged = true;
  if (cfg.distance == DistanceKind::JensenShannon) return js_distance(p, q, d_p);
  const SinkhornResult r =
      sinkhorn_distance(p, q, cfg.cost_matrix, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters, d_p);
  if (converged) *converged = r.converged;
  return r.value;
}

DistanceResult distance_from_outputs(std::span<const ForwardOutput> task_outs,
                                     std::span<const ActionProbs> safe_probs, const SarlConfig& cfg,
                                     std::vector<ActionProbs>* d_logits) {
  const std::size_t m = task_outs.size();
  if (m == 0 || safe_probs.size() != m) throw std::invalid_argument("distance batch is empty or mismatched");
  DistanceResult res;
  res.per_state_values.resize(m);
  if (d_logits) d_logits->assign(m, ActionProbs{});
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) {
    const ActionProbs p = softmax(task_outs[k].logits).probs;
    ActionProbs dp{};
    bool ok = true;
    const double d = action_distance(p, safe_probs[k], cfg, d_logits ? std::span<double>(dp) : std::span<double>(),
                                     &ok);
    if (!ok) ++res.unconverged;
    res.per_state_values[k] = d;
    res.value += d * inv_m;
    if (d_logits) {
      // Softmax backward: dz_j = p_j (dp_j - sum_k p_k dp_k).
      double dot = 0.0;
      for (int a = 0; a < kNumActions; ++a) dot += p[a] * dp[a];
      for (int a = 0; a < kNumActions; ++a) (*d_logits)[k][a] = p[a] * (dp[a] - dot) * inv_m;
    }
  }
  return res;
}

namespace {

std::vector<ActionProbs> safe_distributions(const PolicyParams& psi, std::span<const std::span<const double>> states) {
  std::vector<ActionProbs> out;
  out.reserve(states.size());
  for (auto s : states) out.push_back(forward(psi, s).distribution().probs);
  return out;
}

std::vector<std::span<const double>> slice_states(const TransitionBatch& batch, std::span<const std::size_t> idx) {
  std::vector<std::span<const double>> obs;
  obs.reserve(idx.size());
  for (std::size_t i : idx) obs.emplace_back(batch.transitions.at(i).observation);
  return obs;
}

}  // namespace

DistanceResult distance_loss(const PolicyParams& theta, const PolicyParams& psi,
                             std::span<const std::span<const double>> states, const SarlConfig& cfg) {
  if (theta.arch.actions != psi.arch.actions) throw ShapeMismatch("agents have different action spaces");
  std::vector<ForwardOutput> outs;
  outs.reserve(states.size());
  for (auto s : states) outs.push_back(forward(theta, s));
  const auto safe = safe_distributions(psi, states);
  return distance_from_outputs(outs, safe, cfg);
}

ObjectiveResult sarl_objective_gradient(const PolicyParams& theta, const PolicyParams* psi,
                                        const TransitionBatch& batch, std::span<const std::size_t> indices,
                                        const PpoConfig& ppo, const SarlConfig& sarl) {
  const auto obs = slice_states(batch, indices);
  std::vector<ActionProbs> safe;
  if (psi) {
    if (theta.arch.actions != psi->arch.actions) throw ShapeMismatch("agents have different action spaces");
    safe = safe_distributions(*psi, obs);
  }
  ObjectiveResult res;
  auto lg = gradient(theta, obs, [&](std::span<const ForwardOutput> outs) {
    HeadLoss h;
    res.ppo = ppo_head_loss(outs, batch, indices, ppo, &h.d_logits, &h.d_value);
    res.total = res.ppo.total;
    if (psi) {
      std::vector<ActionProbs> d_dist;
      res.dist = distance_from_outputs(outs, safe, sarl, &d_dist);
      res.total = sarl_objective(res.ppo, res.dist, sarl.beta);
      for (std::size_t k = 0; k < outs.size(); ++k) {
        for (int a = 0; a < kNumActions; ++a) h.d_logits[k][a] += sarl.beta * d_dist[k][a];
      }
    }
    h.loss = res.total;
    return h;
  });
  res.grad = std::move(lg.grad);
  return res;
}

double sarl_objective_value(const PolicyParams& theta, const PolicyParams* psi, const TransitionBatch& batch,
                            std::span<const std::size_t> indices, const PpoConfig& ppo, const SarlConfig& sarl) {
  const auto obs = slice_states(batch, indices);
  std::vector<ForwardOutput> outs;
  outs.reserve(obs.size());
  for (auto s : obs) outs.push_back(forward(theta, s));
  const PpoLossBreakdown br = ppo_head_loss(outs, batch, indices, ppo);
  if (!psi) return br.total;
  const auto safe = safe_distributions(*psi, obs);
  return sarl_objective(br, distance_from_outputs(outs, safe, sarl), sarl.beta);
}

LossAndGradient distance_gradient(const PolicyParams& theta, const PolicyParams& psi,
                                  std::span<const std::span<const double>> states, const SarlConfig& cfg) {
  const auto safe = safe_distributions(psi, states);
  return gradient(theta, states, [&](std::span<const ForwardOutput> outs) {
    HeadLoss h;
    std::vector<ActionProbs> d;
    const DistanceResult r = distance_from_outputs(outs, safe, cfg, &d);
    h.loss = cfg.beta * r.value;
    h.d_logits = std::move(d);
    for (auto& row : h.d_logits) {
      for (double& g : row) g *= cfg.beta;
    }
    h.d_value.assign(outs.size(), 0.0);
    return h;
  });
}

}  // namespace sarl
