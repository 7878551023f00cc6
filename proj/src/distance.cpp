#include "sarl/distance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sarl {

namespace {

void check_same_size(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("distribution size mismatch");
}

// log sum_k exp(x_k)
double logsumexp(const double* x, int n) {
  double m = x[0];
  for (int k = 1; k < n; ++k) m = std::max(m, x[k]);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += std::exp(x[k] - m);
  return m + std::log(s);
}

}  // namespace

std::vector<double> floor_and_renormalize(std::span<const double> p) {
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = std::max(p[i], kProbabilityFloor);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

void floor_and_renormalize_backward(std::span<const double> raw, std::span<const double> d_floored,
                                    std::span<double> d_raw) {
  double sum = 0.0;
  for (double v : raw) sum += std::max(v, kProbabilityFloor);
  double dot = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) dot += d_floored[i] * std::max(raw[i], kProbabilityFloor) / sum;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    d_raw[i] += raw[i] > kProbabilityFloor ? (d_floored[i] - dot) / sum : 0.0;
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_same_size(p, q);
  const auto qf = floor_and_renormalize(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / qf[i]);
  }
  return kl;
}

double js_distance(std::span<const double> p, std::span<const double> q, std::span<double> d_p,
                   std::span<double> d_q) {
  check_same_size(p, q);
  const auto pf = floor_and_renormalize(p);
  const auto qf = floor_and_renormalize(q);
  const std::size_t n = p.size();
  double kl_p = 0.0, kl_q = 0.0;
  std::vector<double> lp(n), lq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.5 * (pf[i] + qf[i]);
    lp[i] = std::log(pf[i] / m);
    lq[i] = std::log(qf[i] / m);
    kl_p += pf[i] * lp[i];
    kl_q += qf[i] * lq[i];
  }
  // d/dp_i of the mixture form reduces to 0.5 ln(p_i / m_i).
  if (!d_p.empty()) {
    for (double& v : lp) v *= 0.5;
    floor_and_renormalize_backward(p, lp, d_p);
  }
  if (!d_q.empty()) {
    for (double& v : lq) v *= 0.5;
    floor_and_renormalize_backward(q, lq, d_q);
  }
  return 0.5 * kl_p + 0.5 * kl_q;
}

bool CostMatrix::valid() const {
  if (n <= 0 || values.size() != static_cast<std::size_t>(n) * n) return false;
  for (int i = 0; i < n; ++i) {
    if ((*this)(i, i) != 0.0) return false;
    for (int j = 0; j < n; ++j) {
      if (!(std::isfinite((*this)(i, j)) && (*this)(i, j) >= 0.0)) return false;
      if ((*this)(i, j) != (*this)(j, i)) return false;
    }
  }
  return true;
}

CostMatrix default_action_cost() {
  // Groups: 0 = noop, 1 = moves (1..4), 2 = toggles (5..8).
  auto group = [](int a) { return a == 0 ? 0 : (a <= 4 ? 1 : 2); };
  CostMatrix c{9, std::vector<double>(81, 0.0)};
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      if (i == j) continue;
      c.values[i * 9 + j] = (group(i) == group(j) && group(i) != 0) ? 0.5 : 1.0;
    }
  }
  return c;
}

CostMatrix parse_cost_matrix(const std::string& text) {
  if (text.empty() || text == "default") return default_action_cost();
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad cost matrix entry '" + tok + "'");
    }
  }
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(vals.size()))));
  CostMatrix c{n, std::move(vals)};
  if (static_cast<std::size_t>(n) * n != c.values.size()) throw std::invalid_argument("cost matrix is not square");
  if (!c.valid()) throw std::invalid_argument("cost matrix must be symmetric, non-negative, zero diagonal");
  return c;
}

std::string format_cost_matrix(const CostMatrix& c) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < c.values.size(); ++i) out << (i ? "," : "") << c.values[i];
  return out.str();
}

SinkhornResult sinkhorn_distance(std::span<const double> p, std::span<const double> q, const CostMatrix& cost,
                                 double epsilon, int iterations, std::span<double> d_p, std::span<double> d_q,
                                 std::vector<double>* residuals) {
  check_same_size(p, q);
  const int n = static_cast<int>(p.size());
  if (cost.n != n) throw std::invalid_argument("cost matrix size does not match distributions");
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn epsilon must be positive");
  if (iterations < 1) throw std::invalid_argument("sinkhorn needs at least one iteration");

  const auto a = floor_and_renormalize(p);
  const auto b = floor_and_renormalize(q);
  std::vector<double> log_a(n), log_b(n);
  for (int i = 0; i < n; ++i) {
    log_a[i] = std::log(a[i]);
    log_b[i] = std::log(b[i]);
  }
  const bool want_grad = !d_p.empty() || !d_q.empty();

  // Potentials after each iteration; f_hist[k], g_hist[k] for k = 1..iters.
  // g_hist[0] is the zero starting point.
  std::vector<std::vector<double>> f_hist, g_hist;
  std::vector<double> f(n, 0.0), g(n, 0.0), buf(n);
  if (want_grad) g_hist.push_back(g);

  auto plan = [&](const std::vector<double>& fv, const std::vector<double>& gv, int i, int j) {
    return std::exp((fv[i] + gv[j] - cost(i, j)) / epsilon);
  };
  auto row_violation = [&](const std::vector<double>& fv, const std::vector<double>& gv) {
    double viol = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += plan(fv, gv, i, j);
      viol += std::abs(s - a[i]);
    }
    return viol;
  };

  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) buf[j] = (g[j] - cost(i, j)) / epsilon;
      f[i] = epsilon * (log_a[i] - logsumexp(buf.data(), n));
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / epsilon;
      g[j] = epsilon * (log_b[j] - logsumexp(buf.data(), n));
    }
    if (want_grad) {
      f_hist.push_back(f);
      g_hist.push_back(g);
    }
    if (residuals) residuals->push_back(row_violation(f, g));
  }

  SinkhornResult res;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) res.value += plan(f, g, i, j) * cost(i, j);
  }
  res.marginal_violation = row_violation(f, g);
  res.converged = res.marginal_violation <= kSinkhornTolerance;
  if (!want_grad) return res;

  // Reverse pass through the unrolled iterations.
  std::vector<double> f_bar(n, 0.0), g_bar(n, 0.0), a_bar(n, 0.0), b_bar(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double t = cost(i, j) * plan(f, g, i, j) / epsilon;
      f_bar[i] += t;
      g_bar[j] += t;
    }
  }
  for (int k = iterations; k >= 1; --k) {
    const auto& fk = f_hist[k - 1];
    const auto& g_prev = g_hist[k - 1];
    // g_j = eps log b_j - eps LSE_i((f_i - C_ij)/eps)
    for (int j = 0; j < n; ++j) {
      b_bar[j] += g_bar[j] * epsilon / b[j];
      for (int i = 0; i < n; ++i) buf[i] = (fk[i] - cost(i, j)) / epsilon;
      const double lse = logsumexp(buf.data(), n);
      for (int i = 0; i < n; ++i) f_bar[i] -= g_bar[j] * std::exp(buf[i] - lse);
    }
    // f_i = eps log a_i - eps LSE_j((g_prev_j - C_ij)/eps)
    std::fill(g_bar.begin(), g_bar.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      a_bar[i] += f_bar[i] * epsilon / a[i];
      for (int j = 0; j < n; ++j) buf[j] = (g_prev[j] - cost(i, j)) / epsilon;
      const double lse = logsumexp(buf.data(), n);
      for (int j = 0; j < n; ++j) g_bar[j] -= f_bar[i] * std::exp(buf[j] - lse);
    }
    std::fill(f_bar.begin(), f_bar.end(), 0.0);
  }
  if (!d_p.empty()) floor_and_renormalize_backward(p, a_bar, d_p);
  if (!d_q.empty()) floor_and_renormalize_backward(q, b_bar, d_q);
  return res;
}

}  // namespace sarl
