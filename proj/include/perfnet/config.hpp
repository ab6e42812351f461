#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "perfnet/engine.hpp"
#include "perfnet/environment.hpp"
#include "perfnet/topology.hpp"

namespace perfnet {

inline constexpr int kConfigVersion = 1;

struct TopologyConfig {
  std::string kind = "ring";  // ring | complete | star | edge_list | schedule
  std::size_t n = 25;
  std::string weights = "uniform";  // uniform | metropolis
  std::string edge_file;            // edge_list
  std::string schedule_file;        // schedule; empty means alternating ring matchings
  std::size_t window = 0;           // declared B for schedules; 0 = schedule length
  bool operator==(const TopologyConfig&) const = default;
};

struct GaussianConfig {
  double zbar = 10.0;
  double sigma2 = 50.0;
  std::size_t dim = 1;
  double mean_dispersion = 0.0;  // per-agent means zbar + dispersion * N(0, I)
  std::uint64_t mean_seed = 0;
  bool operator==(const GaussianConfig&) const = default;
};

struct StrategicConfig {
  std::string dataset;  // CSV path; empty selects a generated corpus
  std::string source = "spam";  // spam | leaf (generated corpus flavour)
  double beta = 1e-4;
  std::size_t per_agent = 138;
  std::size_t test_split = 1150;
  std::size_t columns = 0;  // 0 = all
  bool standardize = true;
  std::uint64_t partition_seed = 0;
  // Generated corpus parameters.
  std::size_t synthetic_rows = 4601;
  std::size_t synthetic_dim = 48;
  double positive_rate = 0.394;
  double heterogeneity = 1.0;
  std::uint64_t data_seed = 0;
  bool operator==(const StrategicConfig&) const = default;
};

struct EnvironmentConfig {
  std::string kind = "gaussian_mean";  // gaussian_mean | strategic_shift
  double eps_avg = 0.9;
  double spread = 0.6;             // multipliers 1-spread .. 1+spread
  std::vector<double> eps_grid;    // explicit multipliers (mean 1)
  std::vector<double> eps_list;    // explicit absolute sensitivities
  bool homogeneous = false;
  GaussianConfig gaussian;
  StrategicConfig strategic;
  bool operator==(const EnvironmentConfig&) const = default;
};

struct RunSection {
  std::uint64_t T = 200000;
  std::size_t batch = 1;
  std::uint64_t record_every = 100;
  std::uint64_t seed = 0;
  std::vector<double> theta0;  // empty = zeros
  double divergence_threshold = 1e12;
  bool operator==(const RunSection&) const = default;
};

struct MetricsConfig {
  std::size_t risk_mc = 0;  // 0 = exact
  bool accuracy = false;
  bool grad_norm = true;
  double rate_window = 0.5;
  std::uint64_t rate_min_t = 100;
  /// A seed is flagged when the risk exceeds this multiple of its initial value.
  double risk_blowup = 10.0;
  bool operator==(const MetricsConfig&) const = default;
};

struct SweepConfig {
  std::string axis;  // empty = no sweep; eps_avg | a0 | a1 | batch | spread | homogeneous
  std::vector<double> values;
  bool operator==(const SweepConfig&) const = default;
};

struct TheoryConfig {
  double delta = 0.1;
  std::size_t curve_points = 200;
  bool operator==(const TheoryConfig&) const = default;
};

struct ExperimentConfig {
  int config_version = kConfigVersion;
  std::string name = "custom";
  TopologyConfig topology;
  EnvironmentConfig environment;
  RunSection run;
  StepSchedule step = StepSchedule::inverse_time(50.0, 1e4);
  MetricsConfig metrics;
  std::vector<std::uint64_t> seeds;
  SweepConfig sweep;
  TheoryConfig theory;
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys take their defaults; unknown keys, wrong types and an
/// unsupported config_version raise Errc::config.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// FNV-1a over the canonical JSON dump.
std::uint64_t config_hash(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// gaussian_mean | spam_logistic | hetero_vs_homo; Errc::config otherwise.
ExperimentConfig preset(const std::string& name);

/// Applies one sweep value to a copy of the config.
ExperimentConfig with_axis(const ExperimentConfig& config, const std::string& axis,
                           double value);

/// Built objects. Dataset-backed environments load their CSV here.
Environment build_environment(const ExperimentConfig& config);
Mixing build_mixing(const TopologyConfig& topology);
RunConfig build_run_config(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace perfnet
