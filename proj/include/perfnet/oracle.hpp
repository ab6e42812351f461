#pragma once

#include <cstddef>
#include <cstdint>

#include "perfnet/common.hpp"
#include "perfnet/environment.hpp"

namespace perfnet {

struct InnerSolverOptions {
  std::size_t max_iterations = 1000;
  double gradient_tol = 1e-10;
};

/// Result of applying M once: the minimizer of the frozen objective
/// (1/n) sum_i f_i(.; deployed).
struct MapResult {
  Vector value;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct FixedPointOptions {
  std::size_t max_deployments = 10000;
  double tol = 1e-8;
  double divergence_threshold = 1e12;
  InnerSolverOptions inner;
};

struct FixedPointResult {
  Vector theta_ps;
  double residual = 0.0;  // ||theta - M(theta)|| at the returned iterate
  std::size_t deployments = 0;
  bool converged = false;
  bool diverged = false;
};

struct ContractionReport {
  double empirical_ratio = 0.0;
  double theoretical_bound = 0.0;  // eps_avg * L / mu
  std::size_t pairs = 0;
};

enum class InfluenceModel { local, global };

struct ExistenceVerdict {
  bool exists = false;
  double threshold = 0.0;  // mu / L
  double sensitivity = 0.0;  // eps_avg, or sqrt(n) * eps_avg when global
};

/// sum_i mean_i / (n (1 - eps_avg)). Gaussian populations only; throws
/// Errc::no_fixed_point when eps_avg >= 1.
Vector closed_form_multi_ps(const Environment& env);

/// Gradient of the frozen objective (1/n) sum_i grad f_i(theta; deployed).
/// Exact for both kinds (strategic uses the full empirical base data).
Vector frozen_gradient(const Environment& env, const Vector& theta,
                       const Vector& deployed);

/// M(deployed). Gaussian: analytic mean(mean_i + eps_i * deployed).
/// Strategic: full-batch gradient descent with step 1/L on the shifted
/// data, warm-started at `warm_start` (or the deployed point).
MapResult apply_map(const Environment& env, const Vector& deployed,
                    const InnerSolverOptions& options = {},
                    const Vector* warm_start = nullptr);

/// theta_{k+1} = M(theta_k) until ||theta_{k+1} - theta_k|| <= tol.
FixedPointResult repeated_gd_fixed_point(const Environment& env,
                                         const Vector& theta0,
                                         const FixedPointOptions& options = {});

/// Largest ||M(a) - M(b)|| / ||a - b|| over random pairs drawn uniformly in
/// the ball of `radius` around `center`.
ContractionReport contraction_probe(const Environment& env, std::size_t pairs,
                                    double radius, const Vector& center,
                                    std::uint64_t seed,
                                    const InnerSolverOptions& inner = {});

ExistenceVerdict existence_check(double eps_avg, double mu, double smoothness,
                                 InfluenceModel model, std::size_t n);

/// Existence threshold of the competitive setting with equal sensitivities:
/// mu / (sqrt(n) L).
double competitive_threshold(double mu, double smoothness, std::size_t n);

}  // namespace perfnet
