#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace sarl::oracle {

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
// turning rounding noise into large ratios.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace sarl::oracle
