#include "sarl/evaluation.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sarl/ppo.hpp"
#include "sarl/rng.hpp"

namespace sarl {

namespace {

// Mean and standard error (sample std / sqrt(n)); 0 error for n < 2.
std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

int greedy_action(const ActionProbs& logits) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (logits[a] > logits[best]) best = a;
  }
  return best;
}

LevelResult evaluate_level(const PolicyParams& params, const Board& level, const EvalOptions& opt,
                           std::uint64_t level_index) {
  Episode ep(level, opt.task, opt.episode_cap, opt.seeding, opt.rewards);
  std::mt19937_64 rng(hash_combine(opt.sample_seed, level_index));
  while (!ep.done()) {
    const ForwardOutput out = forward(params, observe(ep.board()));
    const int a = opt.greedy ? greedy_action(out.logits) : sample_action(out.distribution().probs, rng);
    ep.step(static_cast<Action>(a));
  }
  LevelResult r;
  r.length = ep.t();
  const int possible = ep.possible_reward();
  r.performance_ratio = possible > 0 ? std::max(0.0, ep.material_reward()) / possible : 0.0;
  const CounterfactualTrace trace = inaction_rollout(level, ep.t() + opt.t_stab, opt.seeding);
  r.side_effect = episodic_side_effect(ep.board(), trace, ep.t(), opt.t_stab);
  return r;
}

EvalScore evaluate(const PolicyParams& params, const std::vector<Board>& bank, const EvalOptions& opt) {
  if (bank.empty()) throw std::invalid_argument("evaluation bank is empty");
  EvalScore s;
  std::vector<double> len, perf, side;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const LevelResult r = evaluate_level(params, bank[i], opt, i);
    s.per_level.push_back(r);
    len.push_back(r.length);
    perf.push_back(r.performance_ratio);
    side.push_back(r.side_effect);
  }
  std::tie(s.mean_episode_length, s.stderr_length) = mean_stderr(len);
  std::tie(s.mean_performance_ratio, s.stderr_performance) = mean_stderr(perf);
  std::tie(s.mean_side_effect, s.stderr_side_effect) = mean_stderr(side);
  return s;
}

const char* metric_name(ChampionMetric m) {
  switch (m) {
    case ChampionMetric::Length: return "length";
    case ChampionMetric::Performance: return "performance";
    case ChampionMetric::SideEffect: return "side_effect";
  }
  return "?";
}

bool lower_is_better(ChampionMetric m) { return m != ChampionMetric::Performance; }

double metric_value(const EvalScore& s, ChampionMetric m) {
  switch (m) {
    case ChampionMetric::Length: return s.mean_episode_length;
    case ChampionMetric::Performance: return s.mean_performance_ratio;
    case ChampionMetric::SideEffect: return s.mean_side_effect;
  }
  return 0.0;
}

bool strictly_better(ChampionMetric m, double candidate, double incumbent) {
  return lower_is_better(m) ? candidate < incumbent : candidate > incumbent;
}

ChampionRecord champion_update(const ChampionRecord& record, const EvalScore& score, const PolicyParams& params,
                               bool* replaced) {
  const double v = metric_value(score, record.metric);
  const bool take = !record.best_score || strictly_better(record.metric, v, *record.best_score);
  if (replaced) *replaced = take;
  if (!take) return record;
  ChampionRecord next;
  next.metric = record.metric;
  next.best_score = v;
  next.best_params = params;
  next.step_found = score.env_steps_at_eval;
  next.best_eval = score;
  return next;
}

EvalSchedule::EvalSchedule(std::int64_t every_k) : every_k_(every_k), next_(every_k) {
  if (every_k < 1) throw std::invalid_argument("evaluation interval must be at least 1 step");
}

int EvalSchedule::advance(std::int64_t total_steps) {
  int fired = 0;
  while (total_steps >= next_) {
    ++fired;
    next_ += every_k_;
  }
  return fired;
}

}  // namespace sarl
