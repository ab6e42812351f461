#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "perfnet/config.hpp"
#include "perfnet/metrics.hpp"
#include "perfnet/theory.hpp"

namespace perfnet {

/// Reference decision for gap metrics: the closed form for gaussian
/// populations, the repeated-GD oracle for strategic ones. Empty when no
/// fixed point exists or the oracle fails to converge.
std::optional<Vector> reference_solution(const Environment& env);

struct SeedRun {
  std::uint64_t seed = 0;
  Trajectory records;
  bool diverged = false;               // overflow or non-finite state
  std::optional<std::uint64_t> diverged_at;
  bool risk_blowup = false;            // risk above the configured multiple of its start
  double wall_seconds = 0.0;
  AgentMatrix final_theta;

  bool flagged() const noexcept { return diverged || risk_blowup; }
};

/// One seed of a config, measured with the config's metric options.
SeedRun run_seed(const ExperimentConfig& config, const Environment& env,
                 const Mixing& mixing, const std::optional<Vector>& reference,
                 std::uint64_t seed, int engine_threads = 1);

struct SweepPointResult {
  std::string label;  // directory name
  double value = 0.0;
  /// True when a fixed point is guaranteed (eps_avg below mu/L).
  bool convergent_regime = true;
  std::vector<SeedRun> runs;
  nlohmann::json ratefits = nlohmann::json::array();
  nlohmann::json theory;
};

struct ExperimentResult {
  std::filesystem::path directory;
  std::vector<SweepPointResult> points;
  nlohmann::json manifest;
  double wall_seconds = 0.0;
  /// Some seed flagged divergence where a fixed point exists.
  bool unexpected_divergence = false;
};

struct ExperimentOptions {
  /// Worker cap; 0 reads PERFNET_THREADS, falling back to the hardware count.
  unsigned workers = 0;
  /// Keep per-seed trajectories in the returned result.
  bool keep_records = true;
};

/// Runs every (sweep value, seed) pair in a worker pool and writes
/// <out>/<name>/<value>/<seed>/metrics.csv, per-value aggregate.csv,
/// ratefit.json and theory.json, and <out>/<name>/manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_root,
                                const ExperimentOptions& options = {});

/// Worker count from PERFNET_THREADS (or hardware concurrency), at least 1.
unsigned default_workers();

/// Rate fits for the cross-seed mean of each metric present.
nlohmann::json rate_fits(std::span<const Trajectory> runs, const MetricsConfig& metrics);
nlohmann::json rate_fit_json(const std::string& metric, const RateFit& fit);

/// Theory summary for a config: constants, step cap, ratio check, and bound
/// curves (written to `curves_path` when given). `reference` is the fixed
/// point from reference_solution. Reports {"applicable": false, "reason": ...}
/// when the bound does not apply.
nlohmann::json theory_report(const ExperimentConfig& config, const Environment& env,
                             const Mixing& mixing, const std::optional<Vector>& reference,
                             const std::optional<std::filesystem::path>& curves_path);

/// Risk series for the networked run and the isolated agent run alone.
struct DisconnectedBaseline {
  std::size_t agent = 0;
  double isolated_eps = 0.0;
  std::vector<double> eps;  // networked sensitivities
  std::vector<std::pair<std::uint64_t, double>> networked_risk;
  std::vector<std::pair<std::uint64_t, double>> isolated_risk;
  bool networked_diverged = false;
  bool isolated_diverged = false;
};

/// The isolated agent's sensitivity becomes `isolated_eps`; the others are
/// rescaled so that eps_avg is unchanged. The networked run includes the
/// agent; the isolated run is the same agent alone (n = 1).
DisconnectedBaseline run_disconnected_baseline(const ExperimentConfig& config,
                                               std::size_t agent, double isolated_eps,
                                               std::uint64_t seed);

struct NonperformativeBaseline {
  AgentMatrix theta_star;  // per-agent decisions trained with deployment fixed at 0
  AgentMatrix theta_gd;    // DSGD-GD decisions
  SeedRun gd_run;          // the DSGD-GD run with the config's metrics
  double baseline_accuracy = 0.0;
  double gd_accuracy = 0.0;
};

/// Trains on unshifted data (all sensitivities zero) with the same topology,
/// schedule and seed, then evaluates both solutions on test data shifted by
/// their own decisions under the true sensitivities.
NonperformativeBaseline run_nonperformative_baseline(const ExperimentConfig& config,
                                                     std::uint64_t seed);

std::string sweep_label(double value);

}  // namespace perfnet
