#pragma once

#include <span>
#include <string>
#include <vector>

namespace sarl {

inline constexpr double kProbabilityFloor = 1e-12;

// max(p_i, floor) renormalized to sum 1.
std::vector<double> floor_and_renormalize(std::span<const double> p);
// Chains a gradient with respect to the floored vector back to the raw one.
void floor_and_renormalize_backward(std::span<const double> raw, std::span<const double> d_floored,
                                    std::span<double> d_raw);

// sum_i p_i ln(p_i / q_i); q is floored first, 0 ln 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Jensen-Shannon divergence in mixture form, both arguments floored.
// Bounded by ln 2. Optional outputs receive d/dp and d/dq.
double js_distance(std::span<const double> p, std::span<const double> q, std::span<double> d_p = {},
                   std::span<double> d_q = {});

// Square ground cost between actions, row-major.
struct CostMatrix {
  int n = 0;
  std::vector<double> values;

  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
  // Non-negative, symmetric, zero diagonal.
  bool valid() const;
};

// 0 on the diagonal, 0.5 between two moves or two toggles, 1 otherwise
// (noop is in a group of its own).
CostMatrix default_action_cost();
CostMatrix parse_cost_matrix(const std::string& text);  // "default" or n*n comma-separated values
std::string format_cost_matrix(const CostMatrix& c);

struct SinkhornResult {
  double value = 0.0;               // <P, C>
  double marginal_violation = 0.0;  // sum_i |P 1 - p|_i after the last iteration
  bool converged = true;            // violation <= 1e-6
};

inline constexpr double kSinkhornTolerance = 1e-6;

// Entropic optimal transport cost between p and q. Log-domain scaling
// iterations on K = exp(-C / eps) from zero potentials; marginals are floored.
// Gradients (if requested) are exact derivatives of the unrolled iterations.
// `residuals`, if given, receives the marginal violation after each iteration.
SinkhornResult sinkhorn_distance(std::span<const double> p, std::span<const double> q, const CostMatrix& cost,
                                 double epsilon, int iterations, std::span<double> d_p = {},
                                 std::span<double> d_q = {}, std::vector<double>* residuals = nullptr);

}  // namespace sarl
