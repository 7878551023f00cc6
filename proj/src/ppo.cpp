#include "sarl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sarl/rng.hpp"

namespace sarl {

void PpoConfig::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo.gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo.gae_lambda must be in [0, 1]");
  if (!(clip > 0.0) || !finite(clip)) throw std::invalid_argument("ppo.clip must be positive");
  if (!(value_clip > 0.0) || !finite(value_clip)) throw std::invalid_argument("ppo.value_clip must be positive");
  if (!finite(value_coef) || !finite(entropy_coef) || !finite(entropy_clip)) {
    throw std::invalid_argument("ppo coefficients must be finite");
  }
  if (!(lr > 0.0) || !finite(lr)) throw std::invalid_argument("ppo.lr must be positive");
  if (batch_size < 1) throw std::invalid_argument("ppo.batch_size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("ppo.epochs must be at least 1");
  if (steps_per_iter < 1) throw std::invalid_argument("ppo.steps_per_iter must be at least 1");
}

// ---------------------------------------------------------------- EnvPool

EnvPool::EnvPool(Options options, std::uint64_t stream_seed) : options_(std::move(options)), level_rng_(stream_seed) {
  if (options_.n_envs < 1) throw std::invalid_argument("need at least one environment");
  if (options_.seed_end <= options_.seed_begin) throw std::invalid_argument("empty level seed range");
  for (int i = 0; i < options_.n_envs; ++i) {
    std::uint64_t seed = 0;
    episodes_.push_back(fresh_episode(&seed));
    level_seeds_.push_back(seed);
  }
}

const Board& EnvPool::level_for(std::uint64_t seed) {
  if (!options_.levels.empty()) return options_.levels[seed];
  auto it = cache_.find(seed);
  if (it != cache_.end()) return it->second;
  LevelSpec spec = options_.shape;
  spec.seed = seed;
  return cache_.emplace(seed, generate_level(spec)).first->second;
}

Episode EnvPool::fresh_episode(std::uint64_t* seed_out) {
  const std::uint64_t seed = options_.levels.empty()
                                 ? options_.seed_begin + uniform_index(level_rng_, options_.seed_end - options_.seed_begin)
                                 : uniform_index(level_rng_, options_.levels.size());
  *seed_out = seed;
  return Episode(level_for(seed), options_.shape.task, options_.episode_cap, options_.seeding, options_.rewards);
}

EpisodeStep EnvPool::step(int i, Action action) {
  EpisodeStep s = episodes_[i].step(action);
  if (episodes_[i].done()) {
    ++finished_;
    finished_reward_ += episodes_[i].total_reward();
    episodes_[i] = fresh_episode(&level_seeds_[i]);
  }
  return s;
}

EnvPool::State EnvPool::state() const {
  State s;
  std::ostringstream rng;
  rng << level_rng_;
  s.level_rng = rng.str();
  s.level_seeds = level_seeds_;
  s.episodes = episodes_;
  s.finished = finished_;
  s.finished_reward = finished_reward_;
  return s;
}

void EnvPool::restore(const State& s) {
  if (s.episodes.size() != episodes_.size() || s.level_seeds.size() != episodes_.size()) {
    throw std::invalid_argument("environment count does not match saved state");
  }
  std::istringstream rng(s.level_rng);
  rng >> level_rng_;
  if (!rng) throw std::invalid_argument("bad saved rng state");
  level_seeds_ = s.level_seeds;
  episodes_ = s.episodes;
  finished_ = s.finished;
  finished_reward_ = s.finished_reward;
}

// ---------------------------------------------------------------- rollout

int sample_action(const ActionProbs& probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  // Rounding left u above the total; take the last action with mass.
  for (int a = kNumActions - 1; a >= 0; --a) {
    if (probs[a] > 0.0) return a;
  }
  return 0;
}

TransitionBatch collect_rollout(const PolicyParams& params, EnvPool& envs, int n_steps, RewardChannel channel,
                                std::mt19937_64& rng, double penalty_weight) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be at least 1");
  const int n_envs = envs.size();
  TransitionBatch batch;
  batch.n_envs = n_envs;
  batch.steps = n_steps;
  batch.transitions.resize(static_cast<std::size_t>(n_envs) * n_steps);
  batch.bootstrap_values.assign(n_envs, 0.0);

  // Step-major loop so every env advances in lockstep; storage is env-major.
  for (int k = 0; k < n_steps; ++k) {
    for (int e = 0; e < n_envs; ++e) {
      Transition& tr = batch.transitions[static_cast<std::size_t>(e) * n_steps + k];
      tr.observation = observe(envs.episode(e).board()).data;
      const ForwardOutput out = forward(params, tr.observation);
      const ActionProbs logp = log_softmax(out.logits);
      const ActionProbs probs = softmax(out.logits).probs;
      tr.action = sample_action(probs, rng);
      tr.log_prob = logp[tr.action];
      tr.value = out.value;
      const EpisodeStep s = envs.step(e, static_cast<Action>(tr.action));
      tr.reward = s.outcome.reward;
      tr.safety_reward = s.safe_reward;
      tr.done = s.outcome.done;
      tr.train_reward = channel == RewardChannel::Safety ? tr.safety_reward
                                                         : penalized_reward(tr.reward, tr.safety_reward, penalty_weight);
    }
  }
  for (int e = 0; e < n_envs; ++e) {
    batch.bootstrap_values[e] = forward(params, observe(envs.episode(e).board()).data).value;
  }
  return batch;
}

void compute_advantages(TransitionBatch& batch, double gamma, double lambda) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("cannot compute advantages of an empty batch");
  if (batch.n_envs < 1 || static_cast<std::size_t>(batch.n_envs) * batch.steps != n ||
      batch.bootstrap_values.size() != static_cast<std::size_t>(batch.n_envs)) {
    throw std::invalid_argument("batch layout is inconsistent");
  }
  batch.raw_advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  for (int e = 0; e < batch.n_envs; ++e) {
    double next_value = batch.bootstrap_values[e];
    double next_adv = 0.0;
    for (int k = batch.steps - 1; k >= 0; --k) {
      const std::size_t i = static_cast<std::size_t>(e) * batch.steps + k;
      const Transition& tr = batch.transitions[i];
      const double live = tr.done ? 0.0 : 1.0;
      const double delta = tr.train_reward + gamma * next_value * live - tr.value;
      const double adv = delta + gamma * lambda * live * next_adv;
      batch.raw_advantages[i] = adv;
      batch.returns[i] = adv + tr.value;
      next_value = tr.value;
      next_adv = adv;
    }
  }
  batch.advantages = batch.raw_advantages;
  if (n > 1) {
    double mean = 0.0;
    for (double a : batch.advantages) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (double& a : batch.advantages) a = sd > 0.0 ? (a - mean) / sd : a - mean;
  }
}

// ---------------------------------------------------------------- loss

PpoLossBreakdown ppo_head_loss(std::span<const ForwardOutput> outs, const TransitionBatch& batch,
                               std::span<const std::size_t> indices, const PpoConfig& cfg,
                               std::vector<ActionProbs>* d_logits, std::vector<double>* d_value) {
  const std::size_t m = indices.size();
  if (m == 0 || outs.size() != m) throw std::invalid_argument("loss slice is empty or mismatched");
  if (batch.advantages.size() != batch.size()) throw std::invalid_argument("advantages not computed");
  if (d_logits) d_logits->assign(m, ActionProbs{});
  if (d_value) d_value->assign(m, 0.0);

  const double inv_m = 1.0 / static_cast<double>(m);
  PpoLossBreakdown br;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = indices[k];
    const Transition& tr = batch.transitions[i];
    const ForwardOutput& out = outs[k];
    const ActionProbs logp = log_softmax(out.logits);
    ActionProbs p{};
    for (int a = 0; a < kNumActions; ++a) p[a] = std::exp(logp[a]);

    // Clipped surrogate.
    const double adv = batch.advantages[i];
    const double ratio = std::exp(logp[tr.action] - tr.log_prob);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double s1 = ratio * adv;
    const double s2 = clipped * adv;
    br.clip_term += std::min(s1, s2) * inv_m;
    // The clipped branch is flat in ratio wherever it is the minimum.
    const double d_surr_d_ratio = s1 <= s2 ? adv : 0.0;

    // Clipped value loss.
    const double ret = batch.returns[i];
    const double v_new = out.value;
    const double dv = v_new - tr.value;
    const double v_clipped = tr.value + std::clamp(dv, -cfg.value_clip, cfg.value_clip);
    const double l1 = (v_new - ret) * (v_new - ret);
    const double l2 = (v_clipped - ret) * (v_clipped - ret);
    br.value_term += std::max(l1, l2) * inv_m;
    double d_vloss = 0.0;
    if (l1 >= l2) {
      d_vloss = 2.0 * (v_new - ret);
    } else if (dv > -cfg.value_clip && dv < cfg.value_clip) {
      d_vloss = 2.0 * (v_clipped - ret);
    }

    // Clipped entropy.
    double ent = 0.0;
    for (int a = 0; a < kNumActions; ++a) ent -= p[a] * logp[a];
    br.entropy_term += std::min(ent, cfg.entropy_clip) * inv_m;
    const bool ent_active = ent < cfg.entropy_clip;

    if (d_logits) {
      ActionProbs& g = (*d_logits)[k];
      for (int a = 0; a < kNumActions; ++a) {
        const double d_ratio = ratio * ((a == tr.action ? 1.0 : 0.0) - p[a]);
        const double d_ent = ent_active ? -p[a] * (logp[a] + ent) : 0.0;
        g[a] = (-d_surr_d_ratio * d_ratio - cfg.entropy_coef * d_ent) * inv_m;
      }
    }
    if (d_value) (*d_value)[k] = cfg.value_coef * d_vloss * inv_m;
  }
  br.total = -br.clip_term + cfg.value_coef * br.value_term - cfg.entropy_coef * br.entropy_term;
  return br;
}

PpoLossResult ppo_loss(const PolicyParams& params, const TransitionBatch& batch,
                       std::span<const std::size_t> indices, const PpoConfig& cfg) {
  std::vector<std::span<const double>> obs;
  obs.reserve(indices.size());
  for (std::size_t i : indices) obs.emplace_back(batch.transitions.at(i).observation);
  PpoLossResult res;
  auto lg = gradient(params, obs, [&](std::span<const ForwardOutput> outs) {
    HeadLoss h;
    res.breakdown = ppo_head_loss(outs, batch, indices, cfg, &h.d_logits, &h.d_value);
    h.loss = res.breakdown.total;
    return h;
  });
  res.grad = std::move(lg.grad);
  return res;
}

// ---------------------------------------------------------------- optimizer

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(PolicyParams& params, std::span<const double> grad) {
  if (grad.size() != params.flat.size() || m_.size() != grad.size()) {
    throw ShapeMismatch("optimizer and gradient sizes differ");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    params.flat[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
  }
  ++params.version;
}

void Adam::restore(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeMismatch("optimizer state size mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  // Fisher-Yates with our own index draw, so the order is portable.
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(n, s + static_cast<std::size_t>(batch_size));
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s), perm.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

}  // namespace sarl
