#include "perfnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "perfnet/oracle.hpp"

namespace perfnet {

ConsensusError consensus_error(const AgentMatrix& theta) {
  ConsensusError e;
  if (theta.rows() == 0) return e;
  const Eigen::RowVectorXd avg = theta.colwise().mean();
  e.frobenius_sq = (theta.rowwise() - avg).squaredNorm();
  e.normalized = e.frobenius_sq / static_cast<double>(theta.rows());
  return e;
}

RiskEstimate performative_risk(const Environment& env, const Vector& theta,
                               std::size_t mc, CounterStream& rng) {
  if (mc == 0) throw Error(Errc::contract, "performative risk needs mc >= 1");
  // Per-agent means are independent, so the variance of the average is the
  // sum of per-agent variances over n^2.
  const double n = static_cast<double>(env.agents());
  double value = 0.0;
  double var = 0.0;
  Sample z;
  for (std::size_t i = 0; i < env.agents(); ++i) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < mc; ++k) {
      sample_into(env, i, theta, rng, z);
      const double l = loss_value(env.loss(), theta, z);
      const double delta = l - mean;
      mean += delta / static_cast<double>(k + 1);
      m2 += delta * (l - mean);
    }
    value += mean / n;
    if (mc > 1) var += m2 / static_cast<double>(mc - 1) / static_cast<double>(mc) / (n * n);
  }
  return RiskEstimate{value, std::sqrt(var)};
}

double agent_risk_exact(const Environment& env, std::size_t agent, const Vector& theta) {
  const Population& p = env.population(agent);
  if (const auto* g = std::get_if<GaussianBase>(&p.base)) {
    return 0.5 * (theta - g->mean - p.sensitivity * theta).squaredNorm() +
           0.5 * g->noise_var * static_cast<double>(env.dim());
  }
  const auto& data = *std::get<StrategicBase>(p.base).data;
  Sample z;
  double total = 0.0;
  for (Eigen::Index k = 0; k < data.features.rows(); ++k) {
    z.x = data.features.row(k).transpose() + p.sensitivity * theta;
    z.y = data.labels[k];
    total += loss_value(env.loss(), theta, z);
  }
  return total / static_cast<double>(data.rows());
}

double performative_risk_exact(const Environment& env, const Vector& theta) {
  double total = 0.0;
  for (std::size_t i = 0; i < env.agents(); ++i) total += agent_risk_exact(env, i, theta);
  return total / static_cast<double>(env.agents());
}

double decoupled_grad_norm(const Environment& env, const Vector& theta) {
  return frozen_gradient(env, theta, theta).squaredNorm();
}

double shifted_accuracy(const LabeledData& data, const Vector& theta,
                        const Vector& shift) {
  if (data.rows() == 0) return 0.0;
  const double offset = shift.dot(theta);
  const Vector scores = data.features * theta;
  std::size_t correct = 0;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    // sigmoid(s) >= 1/2  <=>  s >= 0
    const double predicted = scores[k] + offset >= 0.0 ? 1.0 : 0.0;
    if (predicted == data.labels[k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.rows());
}

double shifted_test_accuracy(const Environment& env, const AgentMatrix& thetas) {
  const auto& test = env.test_data();
  if (!test || test->rows() == 0) {
    throw Error(Errc::config, "shifted test accuracy needs a test split");
  }
  if (static_cast<std::size_t>(thetas.rows()) != env.agents()) {
    throw Error(Errc::shape, "one decision per agent expected");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < env.agents(); ++i) {
    const Vector theta = thetas.row(static_cast<Eigen::Index>(i)).transpose();
    total += shifted_accuracy(*test, theta, env.population(i).sensitivity * theta);
  }
  return total / static_cast<double>(env.agents());
}

double shifted_test_accuracy(const Environment& env, const Vector& theta) {
  AgentMatrix thetas(static_cast<Eigen::Index>(env.agents()), theta.size());
  thetas.rowwise() = theta.transpose();
  return shifted_test_accuracy(env, thetas);
}

RateFit rate_fit(std::span<const std::pair<std::uint64_t, double>> series,
                 const RateFitOptions& options) {
  std::vector<std::pair<std::uint64_t, double>> eligible;
  for (const auto& point : series) {
    if (point.first >= options.min_t && point.first > 0) eligible.push_back(point);
  }
  const auto keep = static_cast<std::size_t>(
      std::ceil(options.window_fraction * static_cast<double>(eligible.size())));
  std::vector<std::pair<std::uint64_t, double>> window(
      eligible.end() - static_cast<std::ptrdiff_t>(std::min(keep, eligible.size())),
      eligible.end());
  RateFit fit;
  const auto bad = std::find_if(window.rbegin(), window.rend(), [](const auto& p) {
    return !(p.second > 0.0) || !std::isfinite(p.second);
  });
  if (bad != window.rend()) {
    const auto first_good = bad.base();
    fit.warning = "window shrunk past nonpositive value at t=" + std::to_string(bad->first);
    window.erase(window.begin(), first_good);
  }
  if (window.size() < options.min_points) {
    throw Error(Errc::fit_unavailable,
                "rate fit needs at least " + std::to_string(options.min_points) +
                    " positive points, have " + std::to_string(window.size()));
  }
  double sx = 0.0, sy = 0.0;
  for (const auto& [t, v] : window) {
    sx += std::log(static_cast<double>(t));
    sy += std::log(v);
  }
  const double m = static_cast<double>(window.size());
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [t, v] : window) {
    const double dx = std::log(static_cast<double>(t)) - mx;
    const double dy = std::log(v) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error(Errc::fit_unavailable, "rate fit needs distinct t");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.t_lo = window.front().first;
  fit.t_hi = window.back().first;
  fit.points = window.size();
  return fit;
}

Recorder::Recorder(const Environment& env, RecorderOptions options)
    : env_(env), options_(std::move(options)) {}

MetricRecord Recorder::measure(const SchemeState& state) const {
  MetricRecord r;
  r.t = state.iteration();
  const Vector avg = state.average();
  if (options_.theta_ps) r.gap_sq = (avg - *options_.theta_ps).squaredNorm();
  const auto ce = consensus_error(state.theta());
  r.consensus_sq = ce.frobenius_sq;
  r.consensus_sq_norm = ce.normalized;
  if (options_.risk_mc == 0) {
    r.risk = performative_risk_exact(env_, avg);
  } else {
    CounterStream rng(state.seed(), stream_id(StreamPurpose::risk, 0), state.iteration());
    const auto est = performative_risk(env_, avg, options_.risk_mc, rng);
    r.risk = est.value;
    r.risk_se = est.standard_error;
  }
  if (options_.grad_norm) r.grad_norm_sq = decoupled_grad_norm(env_, avg);
  if (options_.accuracy) r.accuracy = shifted_test_accuracy(env_, state.theta());
  return r;
}

const char* const kMetricCsvHeader =
    "t,gap_sq,consensus_sq_norm,consensus_sq,risk,risk_se,grad_norm_sq,accuracy";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_metrics_csv(std::ostream& out, const Trajectory& records) {
  out << kMetricCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.t << ',' << cell(r.gap_sq) << ',' << format_double(r.consensus_sq_norm)
        << ',' << format_double(r.consensus_sq) << ',' << cell(r.risk) << ','
        << cell(r.risk_se) << ',' << cell(r.grad_norm_sq) << ',' << cell(r.accuracy)
        << '\n';
  }
}

Trajectory read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricCsvHeader) {
    throw Error(Errc::config, "metrics CSV header mismatch");
  }
  Trajectory out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) {
      throw Error(Errc::config, "metrics CSV line " + std::to_string(lineno) +
                                    ": expected 8 columns");
    }
    try {
      MetricRecord r;
      r.t = std::stoull(cells[0]);
      r.gap_sq = parse_cell(cells[1]);
      r.consensus_sq_norm = parse_cell(cells[2]).value_or(0.0);
      r.consensus_sq = parse_cell(cells[3]).value_or(0.0);
      r.risk = parse_cell(cells[4]);
      r.risk_se = parse_cell(cells[5]);
      r.grad_norm_sq = parse_cell(cells[6]);
      r.accuracy = parse_cell(cells[7]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(Errc::config, "metrics CSV line " + std::to_string(lineno) +
                                    ": malformed number");
    }
  }
  return out;
}

namespace {

std::optional<double> metric_value(const MetricRecord& r, std::string_view metric) {
  if (metric == "gap_sq") return r.gap_sq;
  if (metric == "consensus_sq_norm") return r.consensus_sq_norm;
  if (metric == "consensus_sq") return r.consensus_sq;
  if (metric == "risk") return r.risk;
  if (metric == "risk_se") return r.risk_se;
  if (metric == "grad_norm_sq") return r.grad_norm_sq;
  if (metric == "accuracy") return r.accuracy;
  throw Error(Errc::config, "unknown metric '" + std::string(metric) + "'");
}

}  // namespace

std::vector<std::pair<std::uint64_t, double>> metric_series(const Trajectory& records,
                                                            std::string_view metric) {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (const auto& r : records) {
    if (auto v = metric_value(r, metric)) out.emplace_back(r.t, *v);
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::contract, "percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<AggregateRow> aggregate_metric(std::span<const Trajectory> runs,
                                           std::string_view metric) {
  std::map<std::uint64_t, std::vector<double>> by_t;
  for (const auto& run : runs) {
    for (const auto& [t, v] : metric_series(run, metric)) by_t[t].push_back(v);
  }
  std::vector<AggregateRow> out;
  for (auto& [t, values] : by_t) {
    AggregateRow row;
    row.t = t;
    row.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    row.median = percentile(values, 0.5);
    row.p05 = percentile(values, 0.05);
    row.p95 = percentile(values, 0.95);
    out.push_back(row);
  }
  return out;
}

}  // namespace perfnet
