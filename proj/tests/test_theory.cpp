#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "oracles.hpp"
#include "perfnet/oracle.hpp"
#include "perfnet/theory.hpp"
#include "perfnet/topology.hpp"

using namespace perfnet;
using testutil::error_code;

namespace {

// Second evaluation path: every constant written out from its definition
// with no shared intermediates.
struct Rederived {
  double mu_tilde, c1, c2, c3, D, delta_bar;
  std::array<double, 5> cap;
  double network, fluct, consensus;
};

Rederived rederive(double mu, double L, double s2, double vs2, double ea, double em, double rho,
                   double n, double delta, double gap0, double q0, double g1) {
  Rederived r;
  r.mu_tilde = mu - (1.0 + delta) * ea * L;
  r.c1 = L * std::pow(1.0 + em, 2) / (2.0 * n * delta * ea);
  r.c2 = 4.0 * s2 / n + 4.0 * std::pow(L, 2) * std::pow(1.0 + em, 2);
  r.c3 = 12.0 * s2 + 18.0 * std::pow(L, 2) * std::pow(1.0 + em, 2);
  r.D = gap0 + g1 * (8.0 * r.c1 / (n * rho)) * q0;
  r.delta_bar = r.D + 1.5 + 8.0 * s2 / (r.c2 * n);
  r.cap = {4.0 / r.mu_tilde, r.mu_tilde / r.c2, rho / std::sqrt(2.0 * r.c3),
           std::sqrt(rho * rho * r.mu_tilde / (192.0 * r.c1 * (s2 + vs2))),
           rho * r.c1 / (4.0 * r.mu_tilde * r.c1 + rho * r.c2)};
  r.network = 288.0 * r.c1 * (s2 + vs2) / (rho * rho * r.mu_tilde);
  r.fluct = 8.0 * s2 / (r.mu_tilde * n);
  r.consensus = 2.0 * (9.0 + 12.0 * r.delta_bar) * (s2 + vs2) / (rho * rho);
  return r;
}

bool rel_close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

ProblemConstants simple(double eps_avg, double eps_max, std::size_t n, double rho, double s2,
                        double vs2) {
  ProblemConstants p;
  p.eps_avg = eps_avg;
  p.eps_max = eps_max;
  p.n = n;
  p.rho = rho;
  p.sigma_sq = s2;
  p.varsigma_sq = vs2;
  return p;
}

Environment gaussian_preset_env() {
  SuiteOptions o;
  o.n = 25;
  o.eps_avg = 0.9;
  o.spread = 0.6;
  GaussianSuiteParams gp;
  gp.means = {Vector::Constant(1, 10.0)};
  gp.noise_var = 50.0;
  return make_heterogeneous_suite(o, gp);
}

}  // namespace

TEST_CASE("constants: worked examples") {
  auto tc = compute_constants(simple(0.9, 0.9, 1, 1.0, 1.0, 0.0), 0.1, {}, 0.1);
  CHECK(tc.mu_tilde == doctest::Approx(0.01).epsilon(1e-12));
  for (double e : {0.1, 0.4, 0.45}) {
    auto t = compute_constants(simple(e, e, 1, 1.0, 1.0, 0.0), 1.0, {}, 0.1);
    CHECK(rel_close(t.c1, (1 + e) * (1 + e) / (2 * e)));
  }
  CHECK(error_code([] { compute_constants(simple(0.95, 0.95, 1, 1.0, 1.0, 0.0), 0.1, {}, 0.1); }) ==
        Errc::stability_violated);
  CHECK(error_code([] { compute_constants(simple(0.0, 0.0, 1, 1.0, 1.0, 0.0), 0.1, {}, 0.1); }) ==
        Errc::inapplicable);
}

TEST_CASE("constants: dual-path agreement") {
  CounterStream rng(77, 0, 0);
  for (int trial = 0; trial < 200; ++trial) {
    ProblemConstants p;
    p.mu = 0.5 + rng.uniform();
    p.smoothness = p.mu * (1.0 + 3.0 * rng.uniform());
    p.eps_avg = 0.9 * rng.uniform() * p.mu / (1.2 * p.smoothness) + 1e-6;
    p.eps_max = p.eps_avg * (1.0 + rng.uniform());
    p.rho = 0.01 + 0.99 * rng.uniform();
    p.n = 1 + rng.below(50);
    p.sigma_sq = 10.0 * rng.uniform();
    p.varsigma_sq = 10.0 * rng.uniform();
    const double delta = 0.05 + 0.1 * rng.uniform();
    InitialCondition ic{100.0 * rng.uniform(), 10.0 * rng.uniform()};
    const double g1 = 0.01 * rng.uniform();
    auto tc = compute_constants(p, delta, ic, g1);
    auto r = rederive(p.mu, p.smoothness, p.sigma_sq, p.varsigma_sq, p.eps_avg, p.eps_max, p.rho,
                      static_cast<double>(p.n), delta, ic.gap_sq, ic.consensus_frob_sq, g1);
    CHECK(rel_close(tc.mu_tilde, r.mu_tilde));
    CHECK(rel_close(tc.c1, r.c1));
    CHECK(rel_close(tc.c2, r.c2));
    CHECK(rel_close(tc.c3, r.c3));
    CHECK(rel_close(tc.initial_error, r.D));
    CHECK(rel_close(tc.delta_bar, r.delta_bar));
    CHECK(tc.c1 > 0);
    CHECK(tc.c2 > 0);
    CHECK(tc.c3 > 0);
    auto cap = step_size_cap(tc);
    for (std::size_t k = 0; k < 5; ++k) CHECK(rel_close(cap.terms[k], r.cap[k]));
    CHECK(rel_close(cap.cap, *std::min_element(r.cap.begin(), r.cap.end())));

    auto sched = StepSchedule::inverse_time(1.0 + rng.uniform(), 10.0 + 100.0 * rng.uniform());
    std::vector<std::uint64_t> ts{0, 1, 7, 50};
    auto curves = bound_curves(tc, sched, ts);
    double product = 1.0;
    for (std::uint64_t i = 1; i <= 50; ++i) {
      product *= 1.0 - r.mu_tilde * sched.at(i) / 2.0;
      if (i == 50) {
        const double g = sched.at(50);
        const double gap = product * r.D + r.network * g * g + r.fluct * g;
        const double cons = std::pow(1.0 - p.rho / 2.0, 50.0) * ic.consensus_frob_sq / p.n +
                            r.consensus * g * g;
        CHECK(rel_close(curves[3].gap_bound, gap, 1e-11));
        CHECK(rel_close(curves[3].consensus_bound, cons, 1e-11));
      }
    }
  }
}

TEST_CASE("gaussian preset constants") {
  auto env = gaussian_preset_env();
  const double rho = uniform_neighbor_weights(build_ring(25)).rho();
  auto p = gaussian_problem_constants(env, rho);
  CHECK(p.mu == 1.0);
  CHECK(p.smoothness == 1.0);
  CHECK(p.sigma_sq == 50.0);
  CHECK(rel_close(p.eps_avg, 0.9));
  CHECK(rel_close(p.eps_max, 0.9 * 1.6));

  // varsigma^2 bounds the heterogeneity gap with equality somewhere.
  const double ps = closed_form_multi_ps(env)[0];
  double best = 0.0;
  for (std::size_t i = 0; i < 25; ++i) {
    const double a = env.population(i).sensitivity - env.eps_avg();
    // The ratio peaks near x = 1 / theta_PS, so sample finely there.
    std::vector<double> xs;
    for (double x = -2000.0; x <= 2000.0; x += 0.25) xs.push_back(x);
    for (double x = -1.0; x <= 1.0; x += 1e-5) xs.push_back(x);
    for (double x : xs) {
      // grad f - grad f_i at deployment ps + x, common decision.
      const double diff = a * (ps + x);
      const double ratio = diff * diff / (1.0 + x * x);
      CHECK(ratio <= p.varsigma_sq * (1.0 + 1e-12));
      best = std::max(best, ratio);
    }
  }
  CHECK(best >= p.varsigma_sq * (1.0 - 1e-6));

  auto tc = compute_constants(p, 0.1, initial_condition(AgentMatrix::Zero(25, 1), Vector::Constant(1, ps)),
                              50.0 / 10001.0);
  auto cap = step_size_cap(tc);
  CHECK(tc.mu_tilde == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(rho == doctest::Approx(0.020944559).epsilon(1e-7));
  CHECK(p.varsigma_sq == doctest::Approx(2916.29).epsilon(1e-5));
  CHECK(tc.c1 == doctest::Approx(1.32302).epsilon(1e-5));
  CHECK(tc.c2 == doctest::Approx(31.8144).epsilon(1e-5));
  CHECK(tc.c3 == doctest::Approx(707.165).epsilon(1e-5));
  CHECK(cap.binding == 3);
  CHECK(cap.cap == doctest::Approx(2.4128e-6).epsilon(1e-4));
  // The published schedule starts far above the cap.
  CHECK(50.0 / 10001.0 > cap.cap);
}

TEST_CASE("step cap: noise-free limit and monotonicity in sigma") {
  auto tc = compute_constants(simple(0.3, 0.3, 4, 1.0, 0.0, 0.0), 0.1, {}, 0.1);
  auto cap = step_size_cap(tc);
  CHECK(std::isinf(cap.terms[3]));
  CHECK(cap.binding != 3);
  double prev = std::numeric_limits<double>::infinity();
  for (double s2 : {0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4}) {
    auto t = compute_constants(simple(0.3, 0.5, 4, 0.5, s2, 1.0), 0.1, {}, 0.1);
    const double c = step_size_cap(t).cap;
    CHECK(c <= prev);
    prev = c;
  }
}

TEST_CASE("ratio condition") {
  auto tc = compute_constants(simple(0.01, 0.01, 1, 1.0, 1.0, 0.0), 0.1, {}, 0.5);
  tc.mu_tilde = 1.0;  // isolate the schedule from the problem
  CHECK(ratio_condition_check(StepSchedule::constant_step(0.3), tc, 100000).pass);

  auto slow = StepSchedule::inverse_time(1000.0, 2000.0);
  CHECK(ratio_condition_check(slow, tc, 5000).pass);
  // The cube-root term eventually fails: gamma^3 decays faster than the
  // ratio excess 1/(a1 + t). Here it happens near t = 1.1e4.
  auto late = ratio_condition_check(slow, tc, 20000);
  CHECK_FALSE(late.pass);
  REQUIRE(late.first_violation.has_value());
  CHECK(*late.first_violation > 5000);

  auto small = compute_constants(simple(0.9, 0.9, 1, 1.0, 1.0, 0.0), 0.1, {}, 1.0);
  auto harmonic = ratio_condition_check(StepSchedule::inverse_time(1.0, 0.0), small, 100);
  CHECK_FALSE(harmonic.pass);
  CHECK(*harmonic.first_violation == 1);
  CHECK(harmonic.ratio == doctest::Approx(2.0));
}

TEST_CASE("bound curves: limits and asymptotic slopes") {
  SUBCASE("noise-free reduces to the product term") {
    auto tc = compute_constants(simple(0.2, 0.2, 3, 0.5, 0.0, 0.0), 0.1, {4.0, 0.0}, 0.1);
    auto sched = StepSchedule::constant_step(0.05);
    std::vector<std::uint64_t> ts{0, 1, 10, 100};
    auto c = bound_curves(tc, sched, ts);
    CHECK(c[0].gap_bound == 4.0);
    CHECK(c[0].consensus_bound == 0.0);
    for (std::size_t k = 1; k < ts.size(); ++k) {
      const double expected = std::pow(1.0 - tc.mu_tilde * 0.05 / 2.0, ts[k]) * 4.0;
      CHECK(rel_close(c[k].gap_bound, expected, 1e-12));
      CHECK(c[k].consensus_bound == 0.0);
    }
  }
  SUBCASE("t = 0 baselines") {
    auto tc = compute_constants(simple(0.2, 0.3, 5, 0.4, 1.0, 2.0), 0.1, {3.0, 10.0}, 0.01);
    std::uint64_t zero = 0;
    auto c = bound_curves(tc, StepSchedule::inverse_time(1.0, 10.0), std::span(&zero, 1));
    CHECK(c[0].gap_bound == tc.initial_error);
    CHECK(c[0].consensus_bound == 2.0);
  }
  SUBCASE("slopes -1 and -2") {
    auto tc = compute_constants(simple(0.3, 0.3, 100, 1.0, 1.0, 0.0), 1.0, {}, 0.1);
    auto sched = StepSchedule::inverse_time(1.0, 10.0);
    std::vector<std::uint64_t> ts;
    for (double e = 3.0; e <= 5.0 + 1e-9; e += 0.05)
      ts.push_back(static_cast<std::uint64_t>(std::llround(std::pow(10.0, e))));
    auto c = bound_curves(tc, sched, ts);
    std::vector<double> x, gap, cons;
    for (const auto& b : c) {
      x.push_back(static_cast<double>(b.t));
      gap.push_back(b.gap_bound);
      cons.push_back(b.consensus_bound);
    }
    CHECK(std::abs(oracle::loglog_slope(x, gap) + 1.0) <= 0.05);
    CHECK(std::abs(oracle::loglog_slope(x, cons) + 2.0) <= 0.05);
  }
}

TEST_CASE("property: curves nonincreasing once the step conditions hold") {
  auto env = gaussian_preset_env();
  const double rho = uniform_neighbor_weights(build_ring(25)).rho();
  auto p = gaussian_problem_constants(env, rho);
  const double ps = closed_form_multi_ps(env)[0];
  for (double scale : {1.0, 0.5, 0.1}) {
    auto tc0 = compute_constants(p, 0.1, initial_condition(AgentMatrix::Zero(25, 1), Vector::Constant(1, ps)), 1.0);
    const double g = scale * step_size_cap(tc0).cap;
    auto tc = compute_constants(p, 0.1, tc0.initial, g);
    auto sched = StepSchedule::constant_step(g);
    REQUIRE(ratio_condition_check(sched, tc, 1000000).pass);
    std::vector<std::uint64_t> ts;
    for (std::uint64_t t = 0; t <= 1000000; t += 10000) ts.push_back(t);
    auto c = bound_curves(tc, sched, ts);
    for (std::size_t k = 2; k < c.size(); ++k) {
      CHECK(c[k].gap_bound <= c[k - 1].gap_bound);
      CHECK(c[k].consensus_bound <= c[k - 1].consensus_bound);
    }
  }
}

TEST_CASE("transient threshold") {
  auto tc = compute_constants(simple(0.4, 0.4, 3, 1.0, 2.0, 0.0), 0.1, {}, 0.1);
  CHECK(rel_close(transient_threshold(tc, 1.0), 0.1 * 0.4));
  auto wide = compute_constants(simple(0.4, 0.4, 3, 0.5, 2.0, 1.0), 0.1, {}, 0.1);
  auto narrow = compute_constants(simple(0.4, 0.4, 3, 0.05, 2.0, 1.0), 0.1, {}, 0.1);
  CHECK(rel_close(transient_threshold(narrow, 1.0) / transient_threshold(wide, 1.0), 0.01));
  auto het = compute_constants(simple(0.4, 0.4, 3, 0.5, 2.0, 2.0), 0.1, {}, 0.1);
  CHECK(transient_threshold(het, 1.0) < transient_threshold(wide, 1.0));
  auto quiet = compute_constants(simple(0.4, 0.4, 3, 1.0, 0.0, 0.0), 0.1, {}, 0.1);
  CHECK(error_code([&] { transient_threshold(quiet, 1.0); }) == Errc::contract);
}

TEST_CASE("initial condition") {
  AgentMatrix th(3, 2);
  th << 1, 2, 3, 4, 5, 6;
  auto ic = initial_condition(th, Vector::Zero(2));
  CHECK(ic.gap_sq == doctest::Approx(9.0 + 16.0));
  CHECK(ic.consensus_frob_sq == doctest::Approx(16.0));
}
