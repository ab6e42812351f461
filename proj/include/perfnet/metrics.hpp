#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "perfnet/common.hpp"
#include "perfnet/engine.hpp"
#include "perfnet/environment.hpp"

namespace perfnet {

struct MetricRecord {
  std::uint64_t t = 0;
  std::optional<double> gap_sq;
  double consensus_sq_norm = 0.0;  // ||Q||_F^2 / n
  double consensus_sq = 0.0;       // ||Q||_F^2
  std::optional<double> risk;
  std::optional<double> risk_se;
  std::optional<double> grad_norm_sq;
  std::optional<double> accuracy;
};

using Trajectory = std::vector<MetricRecord>;

struct ConsensusError {
  double frobenius_sq = 0.0;
  double normalized = 0.0;
};

ConsensusError consensus_error(const AgentMatrix& theta);

struct RiskEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo f(theta; theta): mc samples per agent from D_i(theta).
RiskEstimate performative_risk(const Environment& env, const Vector& theta,
                               std::size_t mc, CounterStream& rng);
/// f(theta; theta) without sampling error: the analytic gaussian form
/// 1/2 ||theta - mean_i - eps_i theta||^2 + d sigma^2 / 2 averaged over
/// agents, or the full empirical average for strategic populations.
double performative_risk_exact(const Environment& env, const Vector& theta);
/// f_i(theta; theta) for one agent, exact.
double agent_risk_exact(const Environment& env, std::size_t agent, const Vector& theta);

/// ||grad f(theta; theta)||^2.
double decoupled_grad_norm(const Environment& env, const Vector& theta);

/// Mean over agents of the accuracy of theta_i on the test rows shifted by
/// eps_i * theta_i. Scores exactly at the boundary count as positive.
double shifted_test_accuracy(const Environment& env, const AgentMatrix& thetas);
/// Shared decision for every agent.
double shifted_test_accuracy(const Environment& env, const Vector& theta);
/// Accuracy of `theta` on `data` with every row shifted by `shift`.
double shifted_accuracy(const LabeledData& data, const Vector& theta,
                        const Vector& shift);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::uint64_t t_lo = 0;
  std::uint64_t t_hi = 0;
  std::size_t points = 0;
  std::string warning;
};

struct RateFitOptions {
  double window_fraction = 0.5;  // last fraction of recorded points
  std::uint64_t min_t = 100;
  std::size_t min_points = 10;
};

/// OLS of log(value) on log(t) over the tail window. Nonpositive values
/// shrink the window (with a warning); fewer than min_points valid points
/// throws Errc::fit_unavailable.
RateFit rate_fit(std::span<const std::pair<std::uint64_t, double>> series,
                 const RateFitOptions& options = {});

/// Computes metric records from scheme states.
struct RecorderOptions {
  std::optional<Vector> theta_ps;
  /// 0: exact risk; otherwise Monte Carlo with this many samples per agent.
  std::size_t risk_mc = 0;
  bool grad_norm = true;
  bool accuracy = false;
};

class Recorder {
 public:
  Recorder(const Environment& env, RecorderOptions options);

  MetricRecord measure(const SchemeState& state) const;
  void operator()(const SchemeState& state) { records_.push_back(measure(state)); }

  const Trajectory& records() const noexcept { return records_; }
  Trajectory take() { return std::move(records_); }

 private:
  const Environment& env_;
  RecorderOptions options_;
  Trajectory records_;
};

extern const char* const kMetricCsvHeader;

void write_metrics_csv(std::ostream& out, const Trajectory& records);
Trajectory read_metrics_csv(std::istream& in);

/// Extracts (t, value) pairs for a named metric column, skipping missing
/// values.
std::vector<std::pair<std::uint64_t, double>> metric_series(const Trajectory& records,
                                                            std::string_view metric);

struct AggregateRow {
  std::uint64_t t = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double p05 = 0.0;
  double p95 = 0.0;
};

/// Per-iteration cross-seed statistics for one metric. Rows exist for every
/// t recorded by at least one seed.
std::vector<AggregateRow> aggregate_metric(std::span<const Trajectory> runs,
                                           std::string_view metric);

/// Linear-interpolated percentile of a sample, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Fixed-precision decimal that round-trips doubles (%.17g).
std::string format_double(double v);

}  // namespace perfnet
