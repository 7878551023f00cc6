#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles/finite_diff.hpp"
#include "sarl/policy.hpp"
#include "sarl/rng.hpp"

#include <unistd.h>

using namespace sarl;

namespace {

Architecture small_arch(bool ego = true) {
  Architecture a;
  a.height = 5;
  a.width = 6;
  a.hidden = {7, 5};
  a.egocentric = ego;
  return a;
}

Observation random_observation(std::mt19937_64& rng, int h, int w) {
  Board b(w, h);
  for (int i = 0; i < b.size(); ++i) {
    const int k = static_cast<int>(rng() % 10);
    if (k >= 3 && k <= 6) b.mutable_cells()[i] = static_cast<CellKind>(k);
    if (rng() % 7 == 0) b.set_goal(b.pos_of(i), true);
  }
  const int at = static_cast<int>(rng() % b.size());
  b.mutable_cells()[at] = CellKind::Empty;
  b.set_agent(b.pos_of(at));
  return observe(b);
}

// Dense straight-line forward pass written independently of the library:
// explicit recentering of the full tensor, then one matrix-vector product per
// layer.
struct Dense {
  ActionProbs logits{};
  double value = 0.0;
};

Dense dense_forward(const PolicyParams& p, const Observation& obs) {
  const Architecture& a = p.arch;
  const int H = a.height, W = a.width, C = a.channels;
  int ar = 0, ac = 0;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (obs.at(kAgentChannel, r, c) == 1.0) ar = r, ac = c;
    }
  }
  std::vector<double> x(static_cast<std::size_t>(C) * H * W, 0.0);
  for (int ch = 0; ch < C; ++ch) {
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        int rr = r, cc = c;
        if (a.egocentric) {
          rr = ((r - ar + H / 2) % H + H) % H;
          cc = ((c - ac + W / 2) % W + W) % W;
        }
        x[(ch * H + rr) * W + cc] = obs.at(ch, r, c);
      }
    }
  }
  std::size_t off = 0;
  const double* w = p.flat.data();
  // first layer, input-major weights
  int n_in = static_cast<int>(x.size());
  int n_out = a.hidden[0];
  std::vector<double> h(n_out);
  for (int j = 0; j < n_out; ++j) {
    double s = w[off + static_cast<std::size_t>(n_in) * n_out + j];
    for (int i = 0; i < n_in; ++i) s += x[i] * w[off + static_cast<std::size_t>(i) * n_out + j];
    h[j] = std::tanh(s);
  }
  off += static_cast<std::size_t>(n_in) * n_out + n_out;
  auto out_major = [&](const std::vector<double>& in, int outs, bool act) {
    const int ins = static_cast<int>(in.size());
    std::vector<double> y(outs);
    for (int j = 0; j < outs; ++j) {
      double s = w[off + static_cast<std::size_t>(outs) * ins + j];
      for (int i = 0; i < ins; ++i) s += w[off + static_cast<std::size_t>(j) * ins + i] * in[i];
      y[j] = act ? std::tanh(s) : s;
    }
    off += static_cast<std::size_t>(outs) * ins + outs;
    return y;
  };
  for (std::size_t l = 1; l < a.hidden.size(); ++l) h = out_major(h, a.hidden[l], true);
  const auto logits = out_major(h, a.actions, false);
  const auto value = out_major(h, 1, false);
  Dense d;
  std::copy(logits.begin(), logits.end(), d.logits.begin());
  d.value = value[0];
  return d;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sarl_policy_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("parameter count closed form") {
    Architecture a;
    a.height = a.width = 10;
    a.hidden = {64, 64};
    const std::size_t in = 9 * 10 * 10;
    CHECK(a.param_count() == in * 64 + 64 + 64 * 64 + 64 + 64 * 9 + 9 + 64 + 1);
    CHECK(init_params(a, 1).flat.size() == a.param_count());
  }

  TEST_CASE("init is deterministic and biases start at zero") {
    const Architecture a = small_arch();
    const PolicyParams p = init_params(a, 5);
    CHECK(p.flat == init_params(a, 5).flat);
    CHECK(p.flat != init_params(a, 6).flat);
    // first hidden bias sits after the input-major weight block
    const std::size_t b0 = static_cast<std::size_t>(a.input_size()) * 7;
    for (int j = 0; j < 7; ++j) CHECK(p.flat[b0 + j] == 0.0);
    for (double v : p.flat) CHECK(std::isfinite(v));
  }

  TEST_CASE("zero network is uniform with zero value") {
    std::mt19937_64 rng(1);
    const PolicyParams p = zero_params(small_arch());
    const auto out = forward(p, random_observation(rng, 5, 6));
    CHECK(out.value == 0.0);
    for (double q : out.distribution().probs) CHECK(q == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  }

  TEST_CASE("softmax shift invariance and normalization") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int k = 0; k < 200; ++k) {
      ActionProbs z;
      for (double& v : z) v = u(rng);
      ActionProbs shifted = z;
      const double c = u(rng);
      for (double& v : shifted) v += c;
      const auto p = softmax(z).probs, q = softmax(shifted).probs;
      double s = 0.0;
      for (int i = 0; i < kNumActions; ++i) {
        CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-9));
        CHECK(p[i] >= 0.0);
        s += p[i];
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
      const auto lp = log_softmax(z);
      for (int i = 0; i < kNumActions; ++i) CHECK(std::exp(lp[i]) == doctest::Approx(p[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("forward matches a dense re-implementation") {
    std::mt19937_64 rng(3);
    for (bool ego : {false, true}) {
      const PolicyParams p = init_params(small_arch(ego), 11);
      for (int k = 0; k < 10; ++k) {
        const Observation obs = random_observation(rng, 5, 6);
        const auto got = forward(p, obs);
        const Dense want = dense_forward(p, obs);
        for (int i = 0; i < kNumActions; ++i) CHECK(got.logits[i] == doctest::Approx(want.logits[i]).epsilon(1e-12));
        CHECK(got.value == doctest::Approx(want.value).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("egocentric input is translation invariant") {
    const PolicyParams p = init_params(small_arch(true), 4);
    Board b(6, 5);
    b.set(1, 1, CellKind::LifeGreen);
    b.set(3, 4, CellKind::Wall);
    b.set_agent(Pos{2, 2});
    Board s(6, 5);
    s.set(1 + 2, 1 + 3, CellKind::LifeGreen);
    s.set(3 + 2, 4 + 3, CellKind::Wall);
    s.set_agent(Pos{4, 5});
    const auto a = forward(p, observe(b)), c = forward(p, observe(s));
    // same sums, different accumulation order
    for (int i = 0; i < kNumActions; ++i) CHECK(a.logits[i] == doctest::Approx(c.logits[i]).epsilon(1e-12));
    CHECK(a.value == doctest::Approx(c.value).epsilon(1e-12));
  }

  TEST_CASE("shape mismatch") {
    const PolicyParams p = zero_params(small_arch());
    std::vector<double> obs(10, 0.0);
    CHECK_THROWS_AS(forward(p, obs), ShapeMismatch);
    Architecture bad = small_arch();
    bad.hidden = {};
    CHECK_THROWS_AS(zero_params(bad), ShapeMismatch);
  }

  TEST_CASE("constant loss has zero gradient") {
    std::mt19937_64 rng(4);
    const PolicyParams p = init_params(small_arch(), 2);
    const Observation obs = random_observation(rng, 5, 6);
    std::vector<std::span<const double>> views{obs.data};
    const auto g = gradient(p, views, [](std::span<const ForwardOutput> outs) {
      HeadLoss h;
      h.loss = 3.0;
      h.d_logits.assign(outs.size(), ActionProbs{});
      h.d_value.assign(outs.size(), 0.0);
      return h;
    });
    for (double v : g.grad) CHECK(v == 0.0);
  }

  TEST_CASE("non-finite loss is reported") {
    std::mt19937_64 rng(4);
    const PolicyParams p = init_params(small_arch(), 2);
    const Observation obs = random_observation(rng, 5, 6);
    std::vector<std::span<const double>> views{obs.data};
    CHECK_THROWS_AS(gradient(p, views,
                             [](std::span<const ForwardOutput> outs) {
                               HeadLoss h;
                               h.loss = std::nan("");
                               h.d_logits.assign(outs.size(), ActionProbs{});
                               h.d_value.assign(outs.size(), 0.0);
                               return h;
                             }),
                    NonFiniteLoss);
  }

  TEST_CASE("value and mixed-head gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      PolicyParams p = init_params(small_arch(trial % 2 == 0), 100 + trial);
      std::vector<Observation> obs;
      for (int k = 0; k < 3; ++k) obs.push_back(random_observation(rng, 5, 6));
      std::vector<std::span<const double>> views;
      for (auto& o : obs) views.emplace_back(o.data);
      // loss = sum_s value(s) + sum_s sum_a c_a * logsoftmax_a(s)
      ActionProbs c;
      for (double& v : c) v = uniform01(rng) - 0.5;
      auto head = [&](std::span<const ForwardOutput> outs) {
        HeadLoss h;
        for (const auto& o : outs) {
          const auto lp = log_softmax(o.logits);
          const auto pr = softmax(o.logits).probs;
          double csum = 0.0;
          for (double v : c) csum += v;
          ActionProbs d{};
          for (int a = 0; a < kNumActions; ++a) {
            h.loss += c[a] * lp[a];
            d[a] = c[a] - csum * pr[a];
          }
          h.loss += o.value;
          h.d_logits.push_back(d);
          h.d_value.push_back(1.0);
        }
        return h;
      };
      const auto g = gradient(p, views, head);
      const auto fd = oracle::central_diff(
          [&](const std::vector<double>& x) {
            PolicyParams q = p;
            q.flat = x;
            std::vector<ForwardOutput> outs;
            for (auto v : views) outs.push_back(forward(q, v));
            return head(outs).loss;
          },
          p.flat);
      CHECK(oracle::max_relative_error(g.grad, fd) < 1e-4);
    }
  }

  TEST_CASE("forward and gradient are bit reproducible") {
    std::mt19937_64 rng(6);
    const PolicyParams p = init_params(small_arch(), 9);
    const Observation obs = random_observation(rng, 5, 6);
    const auto a = forward(p, obs), b = forward(p, obs);
    CHECK(a.logits == b.logits);
    CHECK(a.value == b.value);
    std::vector<double> g1(p.flat.size()), g2(p.flat.size());
    const ActionProbs d{0.1, -0.2, 0.3, 0, 0, 0.5, 0, 0, -0.7};
    accumulate_gradient(p, a, d, 0.25, g1);
    accumulate_gradient(p, b, d, 0.25, g2);
    CHECK(g1 == g2);
  }

  TEST_CASE("checkpoint round trip") {
    PolicyParams p = init_params(small_arch(), 13);
    p.version = 42;
    const auto path = temp_file("rt.ckpt");
    save_checkpoint(path, p);
    const PolicyParams q = load_checkpoint(path);
    CHECK(q.flat == p.flat);
    CHECK(q.arch == p.arch);
    CHECK(q.version == 42);
    CHECK(param_hash(q) == param_hash(p));
    std::filesystem::remove(path);
  }

  TEST_CASE("a flipped byte fails the checksum") {
    const PolicyParams p = init_params(small_arch(), 13);
    auto bytes = encode_checkpoint(p);
    for (std::size_t at : {std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
      auto copy = bytes;
      copy[at] ^= 0x10;
      CHECK_THROWS_AS(decode_checkpoint(copy), CheckpointError);
    }
    auto truncated = bytes;
    truncated.resize(20);
    CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), CheckpointError);
  }

  TEST_CASE("hash ignores the version tag") {
    PolicyParams p = zero_params(small_arch());
    const std::string h = param_hash(p);
    p.version = 7;
    CHECK(param_hash(p) == h);
    p.flat[3] = 1e-300;
    CHECK(param_hash(p) != h);
  }

  TEST_CASE("all-zeros hash is pinned") {
    Architecture a;
    a.height = a.width = 10;
    a.hidden = {64, 64};
    CHECK(param_hash(zero_params(a)) == "c5e7db89d9588e97d745c18d351af88a4c270a018c4713e214e15e7f02fe96b9");
  }
}
