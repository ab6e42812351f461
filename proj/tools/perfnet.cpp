// Command-line front end: experiments, oracle, theory and rate checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "perfnet/config.hpp"
#include "perfnet/dataset.hpp"
#include "perfnet/harness.hpp"
#include "perfnet/metrics.hpp"
#include "perfnet/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace perfnet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitDataset = 4;

/// A config path, or the name of a built-in preset.
ExperimentConfig resolve_config(const std::string& source) {
  if (fs::exists(source)) return load_config(source);
  for (const auto& name : preset_names()) {
    if (name == source) return preset(name);
  }
  throw Error(Errc::config, "no config file or preset named '" + source + "'");
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(Errc::config, "bad sweep value '" + item + "'");
    }
  }
  if (values.empty()) throw Error(Errc::config, "empty --values list");
  return values;
}

int report_experiment(const ExperimentResult& result) {
  for (const auto& point : result.manifest["points"]) {
    std::cerr << point["label"].get<std::string>() << ": " << point["status"].get<std::string>()
              << " (" << point["flagged_seeds"].get<std::size_t>() << " flagged)\n";
  }
  std::cout << (result.directory / "manifest.json").string() << '\n';
  return result.unexpected_divergence ? kExitDivergence : 0;
}

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int cmd_fixed_point(const ExperimentConfig& config, const FixedPointOptions& options,
                    std::size_t pairs, double radius, std::uint64_t seed) {
  const Environment env = build_environment(config);
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(env.dim()));
  const FixedPointResult fp = repeated_gd_fixed_point(env, zero, options);
  const Vector center = fp.converged ? fp.theta_ps : zero;
  const ContractionReport cr =
      contraction_probe(env, pairs, radius, center, seed, options.inner);
  const auto verdict = existence_check(env.eps_avg(), env.strong_convexity(), env.smoothness(),
                                       InfluenceModel::local, env.agents());
  json out = {{"theta_ps", vec(fp.theta_ps)},
              {"residual", fp.residual},
              {"deployments", fp.deployments},
              {"converged", fp.converged},
              {"diverged", fp.diverged},
              {"exists", verdict.exists},
              {"contraction", {{"empirical", cr.empirical_ratio},
                               {"bound", cr.theoretical_bound},
                               {"pairs", cr.pairs}}}};
  if (env.kind() == PopulationKind::gaussian_mean && env.eps_avg() < 1.0) {
    out["closed_form"] = vec(closed_form_multi_ps(env));
  }
  std::cout << out.dump(2) << '\n';
  return verdict.exists && !fp.converged ? kExitDivergence : 0;
}

int cmd_rate_check(const std::string& path, const std::string& metric, double window,
                   std::uint64_t min_t) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open " + path);
  const Trajectory records = read_metrics_csv(in);
  RateFitOptions options;
  options.window_fraction = window;
  options.min_t = min_t;
  const RateFit fit = rate_fit(metric_series(records, metric), options);
  if (!fit.warning.empty()) std::cerr << "warning: " << fit.warning << '\n';
  std::cout << rate_fit_json(metric, fit).dump(2) << '\n';
  return 0;
}

void write_series(const fs::path& path,
                  const std::vector<std::pair<std::uint64_t, double>>& series) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::config, "cannot write " + path.string());
  out << "t,risk\n";
  for (const auto& [t, v] : series) out << t << ',' << format_double(v) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized performative prediction simulator"};
  app.require_subcommand(1);

  std::string config_source;
  std::string out_dir = "out";
  unsigned workers = 0;

  auto* run_cmd = app.add_subcommand("run", "Run every seed (and sweep value) of a config");
  run_cmd->add_option("config", config_source, "Config file or preset name")->required();
  run_cmd->add_option("--out", out_dir, "Output root");
  run_cmd->add_option("--workers", workers, "Worker threads (default PERFNET_THREADS)");

  std::string axis;
  std::string values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a config across one axis");
  sweep_cmd->add_option("config", config_source, "Config file or preset name")->required();
  sweep_cmd->add_option("--axis", axis, "eps_avg|spread|homogeneous|a0|a1|gamma|batch|T|n")
      ->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
  sweep_cmd->add_option("--out", out_dir, "Output root");
  sweep_cmd->add_option("--workers", workers, "Worker threads");

  std::size_t pairs = 100;
  double radius = 10.0;
  std::uint64_t seed = 0;
  auto* fp_cmd = app.add_subcommand("fixed-point", "Repeated-GD fixed point and contraction probe");
  fp_cmd->add_option("config", config_source, "Config file or preset name")->required();
  fp_cmd->add_option("--pairs", pairs, "Contraction probe pairs");
  fp_cmd->add_option("--radius", radius, "Probe ball radius");
  fp_cmd->add_option("--seed", seed, "Probe seed");
  FixedPointOptions fp_options;
  fp_cmd->add_option("--deployments", fp_options.max_deployments, "Outer deployment budget");
  fp_cmd->add_option("--inner", fp_options.inner.max_iterations, "Inner GD iterations");
  fp_cmd->add_option("--tol", fp_options.tol, "Fixed-point tolerance");

  std::string curves;
  auto* theory_cmd = app.add_subcommand("theory", "Bound constants, step cap and curves");
  theory_cmd->add_option("config", config_source, "Config file or preset name")->required();
  theory_cmd->add_option("--curves", curves, "CSV path for the bound curves");

  std::string csv_path;
  std::string metric = "gap_sq";
  double window = 0.5;
  std::uint64_t min_t = 100;
  auto* rate_cmd = app.add_subcommand("rate-check", "Log-log slope of a metric column");
  rate_cmd->add_option("metrics", csv_path, "metrics.csv")->required();
  rate_cmd->add_option("--metric", metric, "Column name");
  rate_cmd->add_option("--window", window, "Tail fraction of recorded points");
  rate_cmd->add_option("--min-t", min_t, "Ignore points before this iteration");

  std::optional<std::size_t> disconnected;
  bool nonperformative = false;
  double isolated_eps = 1.01;
  auto* base_cmd = app.add_subcommand("baseline", "Disconnected or non-performative baseline");
  base_cmd->add_option("config", config_source, "Config file or preset name");
  auto* dis_opt = base_cmd->add_option("--disconnected", disconnected, "Isolated agent index");
  auto* np_opt = base_cmd->add_flag("--nonperformative", nonperformative,
                                    "Train with deployment fixed at zero");
  dis_opt->excludes(np_opt);
  base_cmd->add_option("--isolated-eps", isolated_eps, "Sensitivity of the isolated agent");
  base_cmd->add_option("--seed", seed, "Seed");
  base_cmd->add_option("--out", out_dir, "Directory for the risk series");

  std::string preset_name;
  std::string preset_out;
  auto* preset_cmd = app.add_subcommand("preset", "Print a built-in preset config");
  preset_cmd->add_option("name", preset_name, "gaussian_mean|spam_logistic|hetero_vs_homo")
      ->required();
  preset_cmd->add_option("-o,--output", preset_out, "Write to file instead of stdout");

  std::size_t rows = 4601, dim = 48;
  double positive_rate = 0.394;
  std::string data_out;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic spam-like CSV corpus");
  synth_cmd->add_option("--rows", rows, "Rows");
  synth_cmd->add_option("--dim", dim, "Feature columns");
  synth_cmd->add_option("--positive-rate", positive_rate, "Fraction of label 1");
  synth_cmd->add_option("--seed", seed, "Seed");
  synth_cmd->add_option("-o,--output", data_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      return report_experiment(
          run_experiment(resolve_config(config_source), out_dir, ExperimentOptions{workers}));
    }
    if (*sweep_cmd) {
      ExperimentConfig config = resolve_config(config_source);
      config.sweep = SweepConfig{axis, parse_values(values)};
      return report_experiment(run_experiment(config, out_dir, ExperimentOptions{workers}));
    }
    if (*fp_cmd) {
      return cmd_fixed_point(resolve_config(config_source), fp_options, pairs, radius, seed);
    }
    if (*theory_cmd) {
      const ExperimentConfig config = resolve_config(config_source);
      const Environment env = build_environment(config);
      const Mixing mixing = build_mixing(config.topology);
      std::optional<fs::path> curves_path;
      if (!curves.empty()) curves_path = curves;
      std::cout << theory_report(config, env, mixing, reference_solution(env), curves_path)
                       .dump(2)
                << '\n';
      return 0;
    }
    if (*rate_cmd) return cmd_rate_check(csv_path, metric, window, min_t);
    if (*base_cmd) {
      if (!disconnected && !nonperformative) {
        throw Error(Errc::config, "baseline needs --disconnected <i> or --nonperformative");
      }
      if (disconnected) {
        const ExperimentConfig config =
            resolve_config(config_source.empty() ? "gaussian_mean" : config_source);
        const auto b = run_disconnected_baseline(config, *disconnected, isolated_eps, seed);
        const fs::path dir = fs::path(out_dir) / (config.name + "_disconnected");
        fs::create_directories(dir);
        write_series(dir / "networked_risk.csv", b.networked_risk);
        write_series(dir / "isolated_risk.csv", b.isolated_risk);
        json out = {{"agent", b.agent},
                    {"isolated_eps", b.isolated_eps},
                    {"eps", b.eps},
                    {"networked_final_risk", b.networked_risk.back().second},
                    {"isolated_final_risk", b.isolated_risk.back().second},
                    {"networked_diverged", b.networked_diverged},
                    {"isolated_diverged", b.isolated_diverged},
                    {"series", dir.string()}};
        std::cout << out.dump(2) << '\n';
        return 0;
      }
      const ExperimentConfig config =
          resolve_config(config_source.empty() ? "spam_logistic" : config_source);
      const auto b = run_nonperformative_baseline(config, seed);
      json out = {{"baseline_accuracy", b.baseline_accuracy},
                  {"dsgd_gd_accuracy", b.gd_accuracy},
                  {"theta_star_mean", vec(b.theta_star.colwise().mean().transpose())}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (*preset_cmd) {
      const ExperimentConfig config = preset(preset_name);
      if (preset_out.empty()) {
        std::cout << to_json(config).dump(2) << '\n';
      } else {
        save_config(preset_out, config);
      }
      return 0;
    }
    if (*synth_cmd) {
      std::ofstream out(data_out);
      if (!out) throw Error(Errc::dataset, "cannot write " + data_out);
      write_dataset_csv(out, synthetic_spam_corpus(rows, dim, positive_rate, seed));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    switch (e.code()) {
      case Errc::dataset:
      case Errc::validation:
        return kExitDataset;
      case Errc::invalid_size:
      case Errc::calibration:
      case Errc::config:
      case Errc::contract:
      case Errc::shape:
      case Errc::not_regular:
      case Errc::not_connected:
      case Errc::unsupported_kind:
      case Errc::fit_unavailable:
        return kExitConfig;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
