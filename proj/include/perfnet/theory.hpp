#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "perfnet/common.hpp"
#include "perfnet/engine.hpp"
#include "perfnet/environment.hpp"

namespace perfnet {

/// Problem-level constants entering the convergence bound.
struct ProblemConstants {
  double mu = 1.0;
  double smoothness = 1.0;   // L
  double sigma_sq = 0.0;     // gradient noise, sigma^2
  double varsigma_sq = 0.0;  // heterogeneity, varsigma^2
  double eps_avg = 0.0;
  double eps_max = 0.0;
  double rho = 1.0;
  std::size_t n = 1;
};

struct InitialCondition {
  double gap_sq = 0.0;             // ||theta_bar^0 - theta_PS||^2
  double consensus_frob_sq = 0.0;  // ||Q^0||_F^2
};

struct TheoryConstants {
  ProblemConstants problem;
  InitialCondition initial;
  double delta = 0.1;
  double gamma1 = 0.0;
  double mu_tilde = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double initial_error = 0.0;  // D
  double delta_bar = 0.0;      // D + 3/2 + 8 sigma^2 / (c2 n)
};

/// Throws Errc::stability_violated when mu_tilde <= 0, and
/// Errc::inapplicable when eps_avg == 0 (c1 has eps_avg in the denominator).
TheoryConstants compute_constants(const ProblemConstants& problem, double delta,
                                  const InitialCondition& initial, double gamma1);

struct StepCap {
  double cap = 0.0;
  std::array<double, 5> terms{};
  std::size_t binding = 0;  // index into terms
};

std::string_view step_cap_term_name(std::size_t index);
StepCap step_size_cap(const TheoryConstants& tc);

struct RatioCheck {
  bool pass = true;
  std::optional<std::uint64_t> first_violation;  // t with gamma_t/gamma_{t+1} too large
  double ratio = 1.0;  // at the violation
  double limit = 1.0;
};

/// gamma_t / gamma_{t+1} against the three-way minimum, for 1 <= t < T.
RatioCheck ratio_condition_check(const StepSchedule& schedule,
                                 const TheoryConstants& tc, std::uint64_t T);

struct BoundPoint {
  std::uint64_t t = 0;
  double gap_bound = 0.0;
  double consensus_bound = 0.0;
  // The three terms of the gap bound.
  double product_term = 0.0;
  double network_term = 0.0;
  double fluctuation_term = 0.0;
  // Constant-free three-term simplification of the gap bound.
  double simplified_transient = 0.0;
  double simplified_network = 0.0;
  double simplified_fluctuation = 0.0;
};

/// Bound curves at the requested iterations (ascending). The running product
/// is carried forward, so cost is O(max t).
std::vector<BoundPoint> bound_curves(const TheoryConstants& tc,
                                     const StepSchedule& schedule,
                                     std::span<const std::uint64_t> ts);

/// Step size below which the fluctuation term dominates the network term:
/// C * delta * rho^2 * eps_avg * sigma^2 / (L (sigma^2 + varsigma^2)).
double transient_threshold(const TheoryConstants& tc, double c);

/// Exact constants for gaussian populations (mu = L = 1). sigma^2 is the
/// per-sample noise times d divided by the batch; varsigma^2 is the
/// tightest constant of the form max_i (a_i^2 + ||b_i||^2) bounding
/// ||grad f - grad f_i||^2 by varsigma^2 (1 + ||theta - theta_PS||^2).
ProblemConstants gaussian_problem_constants(const Environment& env, double rho,
                                            std::size_t batch = 1);

/// Estimates for strategic populations, evaluated exactly over the empirical
/// base data at theta_ps (no growth term).
ProblemConstants estimated_problem_constants(const Environment& env,
                                             const Vector& theta_ps, double rho,
                                             std::size_t batch = 1);

InitialCondition initial_condition(const AgentMatrix& theta0, const Vector& theta_ps);

}  // namespace perfnet
