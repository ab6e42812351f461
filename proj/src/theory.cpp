#include "perfnet/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "perfnet/oracle.hpp"

namespace perfnet {

TheoryConstants compute_constants(const ProblemConstants& p, double delta,
                                  const InitialCondition& initial, double gamma1) {
  if (!(delta > 0.0)) throw Error(Errc::contract, "delta must be > 0");
  if (!(p.mu > 0.0) || !(p.smoothness > 0.0) || !(p.rho > 0.0) || p.n == 0) {
    throw Error(Errc::contract, "mu, L, rho and n must be positive");
  }
  if (p.eps_avg == 0.0) {
    throw Error(Errc::inapplicable,
                "constants inapplicable at eps_avg = 0 (classical DSGD regime)");
  }
  TheoryConstants tc;
  tc.problem = p;
  tc.initial = initial;
  tc.delta = delta;
  tc.gamma1 = gamma1;
  tc.mu_tilde = p.mu - (1.0 + delta) * p.eps_avg * p.smoothness;
  if (!(tc.mu_tilde > 0.0)) {
    throw Error(Errc::stability_violated,
                "mu_tilde = " + std::to_string(tc.mu_tilde) +
                    " <= 0: need eps_avg < mu/((1+delta)L) = " +
                    std::to_string(p.mu / ((1.0 + delta) * p.smoothness)));
  }
  const double n = static_cast<double>(p.n);
  const double lip = p.smoothness * (1.0 + p.eps_max);
  tc.c1 = p.smoothness * (1.0 + p.eps_max) * (1.0 + p.eps_max) /
          (2.0 * n * delta * p.eps_avg);
  tc.c2 = 4.0 * (p.sigma_sq / n + lip * lip);
  tc.c3 = 12.0 * p.sigma_sq + 18.0 * lip * lip;
  tc.initial_error = initial.gap_sq +
                     gamma1 * 8.0 * tc.c1 / (n * p.rho) * initial.consensus_frob_sq;
  tc.delta_bar = tc.initial_error + 1.5 + 8.0 * p.sigma_sq / (tc.c2 * n);
  return tc;
}

std::string_view step_cap_term_name(std::size_t index) {
  static constexpr std::array<std::string_view, 5> names{
      "4/mu_tilde", "mu_tilde/c2", "rho/sqrt(2 c3)",
      "sqrt(rho^2 mu_tilde / (192 c1 (sigma^2 + varsigma^2)))",
      "rho c1 / (4 mu_tilde c1 + rho c2)"};
  return names.at(index);
}

StepCap step_size_cap(const TheoryConstants& tc) {
  if (!(tc.mu_tilde > 0.0)) {
    throw Error(Errc::stability_violated, "step-size cap needs mu_tilde > 0");
  }
  const auto& p = tc.problem;
  const double noise = p.sigma_sq + p.varsigma_sq;
  StepCap cap;
  cap.terms[0] = 4.0 / tc.mu_tilde;
  cap.terms[1] = tc.mu_tilde / tc.c2;
  cap.terms[2] = p.rho / std::sqrt(2.0 * tc.c3);
  cap.terms[3] = noise > 0.0
                     ? std::sqrt(p.rho * p.rho * tc.mu_tilde / (192.0 * tc.c1 * noise))
                     : std::numeric_limits<double>::infinity();
  cap.terms[4] = p.rho * tc.c1 / (4.0 * tc.mu_tilde * tc.c1 + p.rho * tc.c2);
  const auto it = std::min_element(cap.terms.begin(), cap.terms.end());
  cap.binding = static_cast<std::size_t>(it - cap.terms.begin());
  cap.cap = *it;
  return cap;
}

RatioCheck ratio_condition_check(const StepSchedule& schedule,
                                 const TheoryConstants& tc, std::uint64_t T) {
  RatioCheck check;
  const double quarter = tc.mu_tilde / 4.0;
  const double rho = tc.problem.rho;
  const double topo = 1.0 + rho / (4.0 - 2.0 * rho);
  double prev = T >= 1 ? schedule.at(1) : 0.0;
  for (std::uint64_t t = 1; t < T; ++t) {
    const double next = schedule.at(t + 1);
    const double ratio = prev / next;
    const double limit = std::min({std::sqrt(1.0 + quarter * next * next),
                                   std::cbrt(1.0 + quarter * next * next * next), topo});
    if (next > prev || ratio > limit) {
      check.pass = false;
      check.first_violation = t;
      check.ratio = ratio;
      check.limit = limit;
      return check;
    }
    if (schedule.kind == StepSchedule::Kind::constant) break;
    prev = next;
  }
  return check;
}

std::vector<BoundPoint> bound_curves(const TheoryConstants& tc,
                                     const StepSchedule& schedule,
                                     std::span<const std::uint64_t> ts) {
  if (!(tc.mu_tilde > 0.0)) {
    throw Error(Errc::stability_violated, "bound curves need mu_tilde > 0");
  }
  if (!std::is_sorted(ts.begin(), ts.end())) {
    throw Error(Errc::contract, "bound curve iterations must be ascending");
  }
  const auto& p = tc.problem;
  const double n = static_cast<double>(p.n);
  const double noise = p.sigma_sq + p.varsigma_sq;
  const double network_coef = 288.0 * tc.c1 * noise / (p.rho * p.rho * tc.mu_tilde);
  const double fluct_coef = 8.0 * p.sigma_sq / (tc.mu_tilde * n);
  const double consensus_coef = 2.0 * (9.0 + 12.0 * tc.delta_bar) * noise / (p.rho * p.rho);
  const double simple_network = p.smoothness * noise /
                                (n * tc.delta * tc.mu_tilde * p.rho * p.rho * p.eps_avg);
  const double simple_fluct = p.sigma_sq / (n * tc.mu_tilde);
  const double q0 = tc.initial.consensus_frob_sq / n;

  std::vector<BoundPoint> out;
  out.reserve(ts.size());
  double product = 1.0;
  std::uint64_t reached = 0;
  for (std::uint64_t t : ts) {
    for (; reached < t; ++reached) {
      product *= 1.0 - tc.mu_tilde * schedule.at(reached + 1) / 2.0;
    }
    BoundPoint b;
    b.t = t;
    b.product_term = product * tc.initial_error;
    b.simplified_transient = product;
    if (t == 0) {
      b.gap_bound = tc.initial_error;
      b.consensus_bound = q0;
    } else {
      const double g = schedule.at(t);
      b.network_term = network_coef * g * g;
      b.fluctuation_term = fluct_coef * g;
      b.simplified_network = simple_network * g * g;
      b.simplified_fluctuation = simple_fluct * g;
      b.gap_bound = b.product_term + b.network_term + b.fluctuation_term;
      b.consensus_bound = std::pow(1.0 - p.rho / 2.0, static_cast<double>(t)) * q0 +
                          consensus_coef * g * g;
    }
    out.push_back(b);
  }
  return out;
}

double transient_threshold(const TheoryConstants& tc, double c) {
  const auto& p = tc.problem;
  if (!(p.sigma_sq > 0.0)) {
    throw Error(Errc::contract, "transient threshold needs sigma > 0");
  }
  return c * tc.delta * p.rho * p.rho * p.eps_avg * p.sigma_sq /
         (p.smoothness * (p.sigma_sq + p.varsigma_sq));
}

ProblemConstants gaussian_problem_constants(const Environment& env, double rho,
                                            std::size_t batch) {
  if (env.kind() != PopulationKind::gaussian_mean) {
    throw Error(Errc::unsupported_kind, "exact constants need gaussian populations");
  }
  if (batch == 0) throw Error(Errc::contract, "batch must be >= 1");
  ProblemConstants p;
  p.mu = 1.0;
  p.smoothness = 1.0;
  p.eps_avg = env.eps_avg();
  p.eps_max = env.eps_max();
  p.rho = rho;
  p.n = env.agents();
  const Vector theta_ps = closed_form_multi_ps(env);
  Vector mean_avg = Vector::Zero(theta_ps.size());
  double noise = 0.0;
  for (const auto& pop : env.populations()) {
    const auto& g = std::get<GaussianBase>(pop.base);
    mean_avg += g.mean;
    noise = std::max(noise, g.noise_var);
  }
  mean_avg /= static_cast<double>(env.agents());
  p.sigma_sq = noise * static_cast<double>(env.dim()) / static_cast<double>(batch);
  for (const auto& pop : env.populations()) {
    const auto& g = std::get<GaussianBase>(pop.base);
    // grad f - grad f_i = a_i (theta - theta_PS) + b_i
    const double a = pop.sensitivity - env.eps_avg();
    const Vector b = a * theta_ps + g.mean - mean_avg;
    p.varsigma_sq = std::max(p.varsigma_sq, a * a + b.squaredNorm());
  }
  return p;
}

ProblemConstants estimated_problem_constants(const Environment& env,
                                             const Vector& theta_ps, double rho,
                                             std::size_t batch) {
  if (env.kind() != PopulationKind::strategic_shift) {
    return gaussian_problem_constants(env, rho, batch);
  }
  if (batch == 0) throw Error(Errc::contract, "batch must be >= 1");
  ProblemConstants p;
  p.mu = env.strong_convexity();
  p.smoothness = env.smoothness();
  p.eps_avg = env.eps_avg();
  p.eps_max = env.eps_max();
  p.rho = rho;
  p.n = env.agents();
  const Vector full = frozen_gradient(env, theta_ps, theta_ps);
  Sample z;
  for (std::size_t i = 0; i < env.agents(); ++i) {
    const auto& pop = env.population(i);
    const auto& data = *std::get<StrategicBase>(pop.base).data;
    const Vector local = frozen_gradient(env.subset({i}), theta_ps, theta_ps);
    double var = 0.0;
    for (Eigen::Index k = 0; k < data.features.rows(); ++k) {
      z.x = data.features.row(k).transpose() + pop.sensitivity * theta_ps;
      z.y = data.labels[k];
      var += (loss_gradient(env.loss(), theta_ps, z) - local).squaredNorm();
    }
    var /= static_cast<double>(data.rows());
    p.sigma_sq = std::max(p.sigma_sq, var / static_cast<double>(batch));
    p.varsigma_sq = std::max(p.varsigma_sq, (full - local).squaredNorm());
  }
  return p;
}

InitialCondition initial_condition(const AgentMatrix& theta0, const Vector& theta_ps) {
  const Vector avg = theta0.colwise().mean().transpose();
  InitialCondition ic;
  ic.gap_sq = (avg - theta_ps).squaredNorm();
  ic.consensus_frob_sq = (theta0.rowwise() - avg.transpose()).squaredNorm();
  return ic;
}

}  // namespace perfnet
