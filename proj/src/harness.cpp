#include "perfnet/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "perfnet/oracle.hpp"

namespace perfnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::config, "cannot write " + path.string());
  out << text;
}

constexpr const char* kFitMetrics[] = {"gap_sq", "consensus_sq", "consensus_sq_norm",
                                       "grad_norm_sq", "risk"};

}  // namespace

std::string sweep_label(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", value);
  return buf;
}

unsigned default_workers() {
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PERFNET_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) workers = static_cast<unsigned>(cap);
  }
  return workers;
}

std::optional<Vector> reference_solution(const Environment& env) {
  if (env.kind() == PopulationKind::gaussian_mean) {
    if (env.eps_avg() >= 1.0) return std::nullopt;
    return closed_form_multi_ps(env);
  }
  FixedPointOptions options;
  options.max_deployments = 200;
  options.tol = 1e-8;
  const auto result =
      repeated_gd_fixed_point(env, Vector::Zero(static_cast<Eigen::Index>(env.dim())), options);
  if (!result.converged) return std::nullopt;
  return result.theta_ps;
}

SeedRun run_seed(const ExperimentConfig& config, const Environment& env,
                 const Mixing& mixing, const std::optional<Vector>& reference,
                 std::uint64_t seed, int engine_threads) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig rc = build_run_config(config, seed);
  rc.threads = engine_threads;
  RecorderOptions ro;
  ro.theta_ps = reference;
  ro.risk_mc = config.metrics.risk_mc;
  ro.grad_norm = config.metrics.grad_norm;
  ro.accuracy = config.metrics.accuracy && env.test_data() != nullptr;
  Recorder recorder(env, ro);
  RunOutcome outcome = run(rc, env, mixing, config.step,
                           [&recorder](const SchemeState& s) { recorder(s); });
  SeedRun out;
  out.seed = seed;
  out.records = recorder.take();
  out.diverged = outcome.diverged;
  out.diverged_at = outcome.diverged_at;
  out.final_theta = outcome.state.theta();
  if (!out.records.empty() && out.records.front().risk) {
    const double initial = *out.records.front().risk;
    for (const auto& r : out.records) {
      if (!r.risk) continue;
      if (!std::isfinite(*r.risk) || *r.risk > config.metrics.risk_blowup * initial) {
        out.risk_blowup = true;
        break;
      }
    }
  }
  out.wall_seconds = seconds_since(start);
  return out;
}

json rate_fit_json(const std::string& metric, const RateFit& fit) {
  json j = {{"metric", metric},
            {"slope", fit.slope},
            {"intercept", fit.intercept},
            {"r2", fit.r2},
            {"window", {fit.t_lo, fit.t_hi}},
            {"points", fit.points}};
  if (!fit.warning.empty()) j["warning"] = fit.warning;
  return j;
}

json rate_fits(std::span<const Trajectory> runs, const MetricsConfig& metrics) {
  json out = json::array();
  RateFitOptions options;
  options.window_fraction = metrics.rate_window;
  options.min_t = metrics.rate_min_t;
  for (const char* metric : kFitMetrics) {
    const auto rows = aggregate_metric(runs, metric);
    if (rows.empty()) continue;
    std::vector<std::pair<std::uint64_t, double>> series;
    series.reserve(rows.size());
    for (const auto& row : rows) series.emplace_back(row.t, row.mean);
    try {
      out.push_back(rate_fit_json(metric, rate_fit(series, options)));
    } catch (const Error& e) {
      out.push_back({{"metric", metric}, {"error", e.what()}});
    }
  }
  return out;
}

json theory_report(const ExperimentConfig& config, const Environment& env,
                   const Mixing& mixing, const std::optional<Vector>& reference,
                   const std::optional<fs::path>& curves_path) {
  auto inapplicable = [](const std::string& reason) {
    return json{{"applicable", false}, {"reason", reason}};
  };
  const auto rho = mixing.rho();
  if (!rho) return inapplicable("bound curves cover static mixing matrices only");
  try {
    if (!reference) return inapplicable("no fixed point available for this environment");
    const ProblemConstants problem =
        env.kind() == PopulationKind::gaussian_mean
            ? gaussian_problem_constants(env, *rho, config.run.batch)
            : estimated_problem_constants(env, *reference, *rho, config.run.batch);
    Vector theta0 = Vector::Zero(static_cast<Eigen::Index>(env.dim()));
    if (!config.run.theta0.empty()) {
      theta0 = Eigen::Map<const Vector>(config.run.theta0.data(),
                                        static_cast<Eigen::Index>(config.run.theta0.size()));
    }
    const AgentMatrix start = SchemeState::uniform(env.agents(), theta0, 0).theta();
    const TheoryConstants tc = compute_constants(problem, config.theory.delta,
                                                 initial_condition(start, *reference),
                                                 config.step.at(1));
    const StepCap cap = step_size_cap(tc);
    const RatioCheck ratio = ratio_condition_check(config.step, tc, config.run.T);

    json constants = {{"mu", problem.mu},
                      {"L", problem.smoothness},
                      {"sigma_sq", problem.sigma_sq},
                      {"varsigma_sq", problem.varsigma_sq},
                      {"eps_avg", problem.eps_avg},
                      {"eps_max", problem.eps_max},
                      {"rho", problem.rho},
                      {"n", problem.n},
                      {"delta", tc.delta},
                      {"mu_tilde", tc.mu_tilde},
                      {"c1", tc.c1},
                      {"c2", tc.c2},
                      {"c3", tc.c3},
                      {"D", tc.initial_error},
                      {"delta_bar", tc.delta_bar}};
    if (problem.sigma_sq > 0.0) constants["transient_threshold"] = transient_threshold(tc, 1.0);
    json report = {{"applicable", true},
                   {"constants", constants},
                   {"gamma_cap", cap.cap},
                   {"binding_term", std::string(step_cap_term_name(cap.binding))},
                   {"cap_terms", cap.terms},
                   {"gamma1", tc.gamma1},
                   {"gamma1_within_cap", tc.gamma1 <= cap.cap},
                   {"ratio_check", {{"pass", ratio.pass},
                                    {"first_violation", ratio.first_violation
                                                            ? json(*ratio.first_violation)
                                                            : json(nullptr)},
                                    {"ratio", ratio.ratio},
                                    {"limit", ratio.limit}}}};
    if (curves_path) {
      std::vector<std::uint64_t> ts{0};
      const std::size_t points = std::max<std::size_t>(config.theory.curve_points, 2);
      const double top = std::log(static_cast<double>(std::max<std::uint64_t>(config.run.T, 1)));
      for (std::size_t k = 0; k < points; ++k) {
        const auto t = static_cast<std::uint64_t>(
            std::llround(std::exp(top * static_cast<double>(k) / static_cast<double>(points - 1))));
        if (t > ts.back()) ts.push_back(t);
      }
      const auto curves = bound_curves(tc, config.step, ts);
      std::ofstream out(*curves_path);
      if (!out) throw Error(Errc::config, "cannot write " + curves_path->string());
      out << "t,gap_bound,consensus_bound,product_term,network_term,fluctuation_term,"
             "simplified_transient,simplified_network,simplified_fluctuation\n";
      for (const auto& b : curves) {
        out << b.t << ',' << format_double(b.gap_bound) << ','
            << format_double(b.consensus_bound) << ',' << format_double(b.product_term)
            << ',' << format_double(b.network_term) << ','
            << format_double(b.fluctuation_term) << ','
            << format_double(b.simplified_transient) << ','
            << format_double(b.simplified_network) << ','
            << format_double(b.simplified_fluctuation) << '\n';
      }
      report["curves"] = curves_path->string();
    }
    return report;
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::stability_violated:
      case Errc::inapplicable:
      case Errc::no_fixed_point:
      case Errc::unsupported_kind:
        return inapplicable(e.what());
      default:
        throw;
    }
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_root,
                                const ExperimentOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.directory = out_root / config.name;
  fs::create_directories(result.directory);

  std::vector<ExperimentConfig> point_configs;
  if (config.sweep.axis.empty()) {
    point_configs.push_back(config);
    result.points.emplace_back();
    result.points.back().label = sweep_label(config.environment.eps_avg);
    result.points.back().value = config.environment.eps_avg;
  } else {
    for (double v : config.sweep.values) {
      point_configs.push_back(with_axis(config, config.sweep.axis, v));
      result.points.emplace_back();
      result.points.back().label = sweep_label(v);
      result.points.back().value = v;
    }
  }

  struct PointContext {
    std::optional<Environment> env;
    std::optional<Mixing> mixing;
    std::optional<Vector> reference;
  };
  std::vector<PointContext> contexts(point_configs.size());
  if (!config.seeds.empty()) {
    for (std::size_t p = 0; p < point_configs.size(); ++p) {
      auto& ctx = contexts[p];
      ctx.env.emplace(build_environment(point_configs[p]));
      ctx.mixing.emplace(build_mixing(point_configs[p].topology));
      ctx.reference = reference_solution(*ctx.env);
      const auto verdict = existence_check(ctx.env->eps_avg(), ctx.env->strong_convexity(),
                                           ctx.env->smoothness(), InfluenceModel::local,
                                           ctx.env->agents());
      result.points[p].convergent_regime = verdict.exists || ctx.reference.has_value();
      result.points[p].runs.resize(config.seeds.size());
    }
  }

  const std::size_t tasks = point_configs.size() * config.seeds.size();
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(
      options.workers == 0 ? default_workers() : options.workers, std::max<std::size_t>(tasks, 1)));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= tasks) return;
      const std::size_t p = task / config.seeds.size();
      const std::size_t s = task % config.seeds.size();
      try {
        const auto& ctx = contexts[p];
        SeedRun run = run_seed(point_configs[p], *ctx.env, *ctx.mixing, ctx.reference,
                               config.seeds[s]);
        const fs::path dir = result.directory / result.points[p].label /
                             std::to_string(config.seeds[s]);
        fs::create_directories(dir);
        std::ofstream out(dir / "metrics.csv");
        write_metrics_csv(out, run.records);
        result.points[p].runs[s] = std::move(run);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tasks);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  json points = json::array();
  for (std::size_t p = 0; p < result.points.size(); ++p) {
    auto& point = result.points[p];
    json seeds = json::array();
    if (!config.seeds.empty()) {
      const fs::path dir = result.directory / point.label;
      std::vector<Trajectory> trajectories;
      for (const auto& run : point.runs) trajectories.push_back(run.records);
      std::ofstream agg(dir / "aggregate.csv");
      agg << "metric,t,count,mean,median,p05,p95\n";
      for (const char* metric : kFitMetrics) {
        for (const auto& row : aggregate_metric(trajectories, metric)) {
          agg << metric << ',' << row.t << ',' << row.count << ',' << format_double(row.mean)
              << ',' << format_double(row.median) << ',' << format_double(row.p05) << ','
              << format_double(row.p95) << '\n';
        }
      }
      point.ratefits = rate_fits(trajectories, point_configs[p].metrics);
      write_text(dir / "ratefit.json", point.ratefits.dump(2) + "\n");
      point.theory = theory_report(point_configs[p], *contexts[p].env, *contexts[p].mixing,
                                   contexts[p].reference, dir / "theory_curves.csv");
      write_text(dir / "theory.json", point.theory.dump(2) + "\n");
      for (const auto& run : point.runs) {
        seeds.push_back({{"seed", run.seed},
                         {"diverged", run.diverged},
                         {"diverged_at", run.diverged_at ? json(*run.diverged_at) : json(nullptr)},
                         {"risk_blowup", run.risk_blowup},
                         {"wall_seconds", run.wall_seconds}});
        if (run.flagged() && point.convergent_regime) result.unexpected_divergence = true;
      }
    }
    std::size_t flagged = 0;
    for (const auto& run : point.runs) flagged += run.flagged() ? 1 : 0;
    std::string status = "converged";
    if (flagged > 0) status = point.convergent_regime ? "unexpected-divergence"
                                                      : "pass-with-divergence";
    points.push_back({{"label", point.label},
                      {"value", point.value},
                      {"convergent_regime", point.convergent_regime},
                      {"flagged_seeds", flagged},
                      {"status", status},
                      {"seeds", seeds}});
    if (!options.keep_records) {
      for (auto& run : point.runs) run.records.clear();
    }
  }
  result.wall_seconds = seconds_since(start);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  result.manifest = {{"config_version", config.config_version},
                     {"preset", config.name},
                     {"config_hash", hash},
                     {"config", to_json(config)},
                     {"seeds", config.seeds},
                     {"sweep_axis", config.sweep.axis},
                     {"points", points},
                     {"workers", workers},
                     {"wall_seconds", result.wall_seconds}};
  if (config.seeds.empty()) result.manifest["points"] = json::array();
  write_text(result.directory / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

DisconnectedBaseline run_disconnected_baseline(const ExperimentConfig& config,
                                               std::size_t agent, double isolated_eps,
                                               std::uint64_t seed) {
  if (config.environment.kind != "gaussian_mean") {
    throw Error(Errc::config, "the disconnected baseline needs a gaussian config");
  }
  const Environment base = build_environment(config);
  const std::size_t n = base.agents();
  if (agent >= n) throw Error(Errc::config, "isolated agent index out of range");
  std::vector<double> eps(n);
  double others = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    eps[i] = base.population(i).sensitivity;
    if (i != agent) others += eps[i];
  }
  const double target = static_cast<double>(n) * base.eps_avg() - isolated_eps;
  if (n > 1) {
    if (!(others > 0.0) || target < 0.0) {
      throw Error(Errc::config, "cannot keep eps_avg fixed with this isolated sensitivity");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i != agent) eps[i] *= target / others;
    }
  }
  eps[agent] = isolated_eps;

  DisconnectedBaseline out;
  out.agent = agent;
  out.isolated_eps = isolated_eps;
  out.eps = eps;
  const Environment env = base.with_sensitivities(eps);
  const RunConfig rc = build_run_config(config, seed);
  {
    const Mixing mixing = build_mixing(config.topology);
    const auto outcome = run(rc, env, mixing, config.step, [&](const SchemeState& s) {
      out.networked_risk.emplace_back(s.iteration(), performative_risk_exact(env, s.average()));
    });
    out.networked_diverged = outcome.diverged;
  }
  {
    const Environment alone = env.subset({agent});
    const Mixing mixing(MixingMatrix::from_weights(Matrix::Ones(1, 1)));
    const auto outcome = run(rc, alone, mixing, config.step, [&](const SchemeState& s) {
      out.isolated_risk.emplace_back(s.iteration(),
                                     agent_risk_exact(alone, 0, s.theta().row(0).transpose()));
    });
    out.isolated_diverged = outcome.diverged;
  }
  return out;
}

NonperformativeBaseline run_nonperformative_baseline(const ExperimentConfig& config,
                                                     std::uint64_t seed) {
  if (config.environment.kind != "strategic_shift") {
    throw Error(Errc::config, "the non-performative baseline needs a strategic config");
  }
  const Environment env = build_environment(config);
  if (!env.test_data()) throw Error(Errc::config, "the non-performative baseline needs a test split");
  const Environment frozen = env.with_sensitivities(std::vector<double>(env.agents(), 0.0));
  const Mixing mixing = build_mixing(config.topology);
  const RunConfig rc = build_run_config(config, seed);
  NonperformativeBaseline out;
  out.theta_star = run(rc, frozen, mixing, config.step, nullptr).state.theta();
  out.gd_run = run_seed(config, env, mixing, std::nullopt, seed);
  out.theta_gd = out.gd_run.final_theta;
  out.baseline_accuracy = shifted_test_accuracy(env, out.theta_star);
  out.gd_accuracy = shifted_test_accuracy(env, out.theta_gd);
  return out;
}

}  // namespace perfnet
