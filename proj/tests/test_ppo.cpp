#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles/finite_diff.hpp"
#include "sarl/ppo.hpp"
#include "sarl/rng.hpp"

using namespace sarl;
using sarl::test::board_from_rows;

namespace {

TransitionBatch scalar_batch(const std::vector<double>& rewards, const std::vector<double>& values,
                             const std::vector<bool>& done, double bootstrap, int n_envs = 1) {
  TransitionBatch b;
  b.n_envs = n_envs;
  b.steps = static_cast<int>(rewards.size()) / n_envs;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Transition t;
    t.train_reward = t.reward = rewards[i];
    t.value = values[i];
    t.done = done[i];
    b.transitions.push_back(t);
  }
  b.bootstrap_values.assign(n_envs, bootstrap);
  return b;
}

// Plain backward recursion, one env, written out separately.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& d,
                               double v_last, double g, double l) {
  const int n = static_cast<int>(r.size());
  std::vector<double> a(n);
  for (int t = n - 1; t >= 0; --t) {
    const double v_next = t + 1 < n ? v[t + 1] : v_last;
    const double a_next = t + 1 < n ? a[t + 1] : 0.0;
    const double nd = d[t] ? 0.0 : 1.0;
    a[t] = r[t] + g * v_next * nd - v[t] + g * l * nd * a_next;
  }
  return a;
}

EnvPool::Options small_pool(int n_envs) {
  EnvPool::Options o;
  o.shape.width = o.shape.height = 7;
  o.shape.n_pattern_cells = 4;
  o.n_envs = n_envs;
  o.episode_cap = 15;
  return o;
}

Architecture arch_for(int size) {
  Architecture a;
  a.height = a.width = size;
  a.hidden = {6, 5};
  return a;
}

}  // namespace

TEST_SUITE("ppo") {
  TEST_CASE("config validation") {
    PpoConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.gamma == 0.97);
    CHECK(c.entropy_coef == 0.01);
    c.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PpoConfig{};
    c.clip = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PpoConfig{};
    c.lr = std::nan("");
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("single terminal transition") {
    auto b = scalar_batch({1.0}, {0.0}, {true}, 5.0);
    compute_advantages(b, 0.97, 0.95);
    CHECK(b.raw_advantages[0] == 1.0);
    CHECK(b.returns[0] == 1.0);
    CHECK(b.advantages[0] == 1.0);  // a batch of one is left alone
  }

  TEST_CASE("gamma zero collapses to r - V") {
    auto b = scalar_batch({1, -2, 0.5, 3}, {0.2, 0.1, -1, 2}, {false, false, true, false}, 7.0);
    compute_advantages(b, 0.0, 0.95);
    const double want[] = {0.8, -2.1, 1.5, 1.0};
    for (int i = 0; i < 4; ++i) CHECK(b.raw_advantages[i] == doctest::Approx(want[i]).epsilon(1e-15));
  }

  TEST_CASE("five-step fixture against the scalar recursion") {
    const std::vector<double> r(5, 1.0), v(5, 0.0);
    const std::vector<bool> d(5, false);
    auto b = scalar_batch(r, v, d, 0.0);
    compute_advantages(b, 0.97, 0.95);
    const auto want = gae_oracle(r, v, d, 0.0, 0.97, 0.95);
    for (int i = 0; i < 5; ++i) CHECK(b.raw_advantages[i] == doctest::Approx(want[i]).epsilon(1e-14));
    // closed form of the geometric sum for the first entry
    const double q = 0.97 * 0.95;
    CHECK(b.raw_advantages[0] == doctest::Approx((1 - std::pow(q, 5)) / (1 - q)).epsilon(1e-14));
  }

  TEST_CASE("multi-env batches with episode boundaries") {
    std::mt19937_64 rng(3);
    const int envs = 3, steps = 6;
    std::vector<double> r, v;
    std::vector<bool> d;
    for (int i = 0; i < envs * steps; ++i) {
      r.push_back(uniform01(rng) - 0.3);
      v.push_back(uniform01(rng));
      d.push_back(rng() % 4 == 0);
    }
    auto b = scalar_batch(r, v, d, 0.0, envs);
    b.bootstrap_values = {0.5, -0.25, 1.5};
    compute_advantages(b, 0.97, 0.95);
    for (int e = 0; e < envs; ++e) {
      const auto slice = [&](const auto& x) {
        return std::vector<typename std::decay_t<decltype(x)>::value_type>(x.begin() + e * steps,
                                                                             x.begin() + (e + 1) * steps);
      };
      const auto want = gae_oracle(slice(r), slice(v), slice(d), b.bootstrap_values[e], 0.97, 0.95);
      for (int k = 0; k < steps; ++k) {
        CHECK(b.raw_advantages[e * steps + k] == doctest::Approx(want[k]).epsilon(1e-14));
        CHECK(b.returns[e * steps + k] == doctest::Approx(want[k] + v[e * steps + k]).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("normalized advantages have zero mean and unit variance") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 40);
      std::vector<double> r(n), v(n);
      std::vector<bool> d(n);
      for (int i = 0; i < n; ++i) {
        r[i] = 10 * uniform01(rng);
        v[i] = uniform01(rng);
        d[i] = rng() % 3 == 0;
      }
      auto b = scalar_batch(r, v, d, 0.3);
      compute_advantages(b, 0.97, 0.95);
      const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / n;
      double var = 0.0;
      for (double a : b.advantages) var += (a - mean) * (a - mean);
      var /= n;
      CHECK(std::abs(mean) < 1e-10);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
    }
  }

  TEST_CASE("empty or inconsistent batches are rejected") {
    TransitionBatch empty;
    CHECK_THROWS_AS(compute_advantages(empty, 0.97, 0.95), std::invalid_argument);
    auto b = scalar_batch({1, 2}, {0, 0}, {false, false}, 0.0);
    b.bootstrap_values.clear();
    CHECK_THROWS_AS(compute_advantages(b, 0.97, 0.95), std::invalid_argument);
  }

  TEST_CASE("clip fixture with ratios 0.5, 1.0 and 1.6") {
    // Logits fixed; old log-probs chosen to produce the wanted ratios.
    const double rho[] = {0.5, 1.0, 1.6};
    const double adv[] = {-2.0, 1.0, 1.0};
    TransitionBatch b;
    b.n_envs = 1;
    b.steps = 3;
    std::vector<ForwardOutput> outs(3);
    for (int k = 0; k < 3; ++k) {
      for (int a = 0; a < kNumActions; ++a) outs[k].logits[a] = 0.1 * a * (k + 1);
      Transition t;
      t.action = 2 + k;
      t.log_prob = log_softmax(outs[k].logits)[t.action] - std::log(rho[k]);
      b.transitions.push_back(t);
    }
    b.advantages.assign(adv, adv + 3);
    b.raw_advantages = b.advantages;
    b.returns.assign(3, 0.0);
    PpoConfig cfg;
    cfg.clip = 0.2;
    cfg.value_coef = 0.0;
    cfg.entropy_coef = 0.0;
    const std::vector<std::size_t> idx{0, 1, 2};
    std::vector<ActionProbs> d_logits;
    std::vector<double> d_value;
    const auto br = ppo_head_loss(outs, b, idx, cfg, &d_logits, &d_value);
    // min(-1.0, -1.6) = -1.6; 1.0; min(1.6, 1.2) = 1.2
    CHECK(br.clip_term == doctest::Approx((-1.6 + 1.0 + 1.2) / 3.0).epsilon(1e-12));
    CHECK(br.total == doctest::Approx(-br.clip_term).epsilon(1e-15));
    // clipped branch active -> no gradient through the ratio
    for (int a = 0; a < kNumActions; ++a) {
      CHECK(d_logits[0][a] == 0.0);
      CHECK(d_logits[2][a] == 0.0);
    }
    // and the finite-difference probe agrees everywhere
    for (int k = 0; k < 3; ++k) {
      std::vector<double> z(outs[k].logits.begin(), outs[k].logits.end());
      const auto fd = oracle::central_diff(
          [&](const std::vector<double>& x) {
            auto o = outs;
            std::copy(x.begin(), x.end(), o[k].logits.begin());
            return ppo_head_loss(o, b, idx, cfg).total;
          },
          z, 1e-6);
      for (int a = 0; a < kNumActions; ++a) CHECK(d_logits[k][a] == doctest::Approx(fd[a]).epsilon(1e-6).scale(1e-8));
    }
  }

  TEST_CASE("value and entropy terms") {
    TransitionBatch b;
    b.n_envs = 1;
    b.steps = 2;
    for (int k = 0; k < 2; ++k) {
      Transition t;
      t.value = 1.0;
      t.log_prob = -std::log(9.0);
      b.transitions.push_back(t);
    }
    b.advantages = {0.0, 0.0};
    b.returns = {2.0, 0.0};
    std::vector<ForwardOutput> outs(2);
    outs[0].value = 1.5;  // moved 0.5 toward 2: clipped to 1.2 -> max((0.5)^2, (0.8)^2) = 0.64
    outs[1].value = 0.5;  // moved 0.5 toward 0: clipped to 0.8 -> max(0.25, 0.64) = 0.64
    PpoConfig cfg;
    cfg.entropy_clip = 10.0;
    const std::vector<std::size_t> idx{0, 1};
    const auto br = ppo_head_loss(outs, b, idx, cfg);
    CHECK(br.value_term == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(br.entropy_term == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(br.clip_term == 0.0);
    cfg.entropy_clip = 1.0;
    CHECK(ppo_head_loss(outs, b, idx, cfg).entropy_term == 1.0);
  }

  TEST_CASE("rollout sizes, determinism and recorded signals") {
    const PolicyParams p = init_params(arch_for(7), 1);
    auto run = [&] {
      EnvPool pool(small_pool(4), 9);
      std::mt19937_64 rng(2);
      return collect_rollout(p, pool, 20, RewardChannel::Task, rng);
    };
    const TransitionBatch a = run(), b = run();
    CHECK(a.size() == 80u);
    CHECK(a.n_envs == 4);
    CHECK(a.steps == 20);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.transitions[i].action == b.transitions[i].action);
      CHECK(a.transitions[i].observation == b.transitions[i].observation);
      CHECK(a.transitions[i].log_prob <= 0.0);
      CHECK(a.transitions[i].train_reward == a.transitions[i].reward);
    }
    CHECK(a.bootstrap_values == b.bootstrap_values);
  }

  TEST_CASE("safety channel trains on s") {
    const PolicyParams p = init_params(arch_for(7), 1);
    EnvPool pool(small_pool(3), 4);
    std::mt19937_64 rng(5);
    const auto b = collect_rollout(p, pool, 15, RewardChannel::Safety, rng);
    for (const auto& t : b.transitions) CHECK(t.train_reward == t.safety_reward);
  }

  TEST_CASE("penalized reward") {
    CHECK(penalized_reward(1.0, -2.0, 0.3) == doctest::Approx(0.4));
    CHECK(penalized_reward(1.0, 2.0, 0.3) == 1.0);
    CHECK(penalized_reward(1.0, 0.0, 0.3) == 1.0);
  }

  TEST_CASE("forced policy on a one-step-to-exit level") {
    EnvPool::Options o;
    o.n_envs = 1;
    o.episode_cap = 10;
    o.levels = {board_from_rows({"......", "......", "..AE..", "......", "......", "......"})};
    EnvPool pool(o, 1);
    PolicyParams p = zero_params(arch_for(6));
    // policy-head bias sits just before the value head (hidden_last + 1 values)
    const std::size_t value_block = 5 + 1;
    p.flat[p.flat.size() - value_block - kNumActions + static_cast<int>(Action::MoveRight)] = 100.0;
    std::mt19937_64 rng(3);
    const auto b = collect_rollout(p, pool, 1, RewardChannel::Task, rng);
    REQUIRE(b.size() == 1u);
    CHECK(b.transitions[0].action == static_cast<int>(Action::MoveRight));
    CHECK(b.transitions[0].done);
    CHECK(b.transitions[0].reward == doctest::Approx(1.0 - 0.01));
    CHECK(pool.episodes_finished() == 1);
  }

  TEST_CASE("ratio identity for unchanged parameters") {
    const PolicyParams p = init_params(arch_for(7), 2);
    EnvPool pool(small_pool(2), 3);
    std::mt19937_64 rng(6);
    auto b = collect_rollout(p, pool, 10, RewardChannel::Task, rng);
    compute_advantages(b, 0.97, 0.95);
    std::vector<std::size_t> idx(b.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto res = ppo_loss(p, b, idx, PpoConfig{});
    const double mean_adv = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / b.size();
    CHECK(res.breakdown.clip_term == doctest::Approx(mean_adv).scale(1.0).epsilon(1e-12));
  }

  TEST_CASE("ppo gradient matches finite differences") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 4; ++trial) {
      PolicyParams p = init_params(arch_for(6), 20 + trial);
      EnvPool::Options o = small_pool(2);
      o.shape.width = o.shape.height = 6;
      EnvPool pool(o, trial);
      auto b = collect_rollout(p, pool, 3, RewardChannel::Task, rng);
      compute_advantages(b, 0.97, 0.95);
      // perturb so ratios and value deltas are away from 1 / 0
      for (double& w : p.flat) w += 0.05 * (uniform01(rng) - 0.5);
      std::vector<std::size_t> idx{0, 2, 3, 5};
      PpoConfig cfg;
      cfg.entropy_clip = 10.0;
      const auto res = ppo_loss(p, b, idx, cfg);
      const auto fd = oracle::central_diff(
          [&](const std::vector<double>& x) {
            PolicyParams q = p;
            q.flat = x;
            return ppo_loss(q, b, idx, cfg).breakdown.total;
          },
          p.flat);
      CHECK(oracle::max_relative_error(res.grad, fd) < 1e-4);
    }
  }

  TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
    PolicyParams p = zero_params(arch_for(6));
    std::vector<double> g(p.flat.size(), 0.0);
    g[0] = 2.0;
    g[1] = -0.001;
    Adam opt(p.flat.size(), 0.01);
    opt.step(p, g);
    CHECK(p.flat[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.flat[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(p.flat[2] == 0.0);
    CHECK(p.version == 1u);
    CHECK(opt.steps() == 1u);
    CHECK(opt.first_moment()[0] == doctest::Approx(0.2));
    CHECK(opt.second_moment()[0] == doctest::Approx(0.004));
  }

  TEST_CASE("minibatches partition the batch") {
    std::mt19937_64 rng(8);
    const auto mb = minibatches(70, 16, rng);
    REQUIRE(mb.size() == 5u);
    CHECK(mb.back().size() == 6u);
    std::set<std::size_t> all;
    for (const auto& m : mb) all.insert(m.begin(), m.end());
    CHECK(all.size() == 70u);
    CHECK(*all.rbegin() == 69u);
  }

  TEST_CASE("environment pool state round trip") {
    const PolicyParams p = init_params(arch_for(7), 1);
    EnvPool a(small_pool(3), 5);
    std::mt19937_64 rng(1);
    collect_rollout(p, a, 12, RewardChannel::Task, rng);
    EnvPool b(small_pool(3), 77);
    b.restore(a.state());
    std::mt19937_64 r1(2), r2(2);
    const auto x = collect_rollout(p, a, 30, RewardChannel::Task, r1);
    const auto y = collect_rollout(p, b, 30, RewardChannel::Task, r2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x.transitions[i].observation == y.transitions[i].observation);
      CHECK(x.transitions[i].reward == y.transitions[i].reward);
    }
  }
}
