#include "perfnet/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace perfnet {

namespace {

bool is_gaussian(const Population& p) {
  return std::holds_alternative<GaussianBase>(p.base);
}

void check_theta(const Environment& env, const Eigen::Ref<const Vector>& v,
                 const char* what) {
  if (static_cast<std::size_t>(v.size()) != env.dim()) {
    throw Error(Errc::shape, std::string(what) + " has dimension " +
                                 std::to_string(v.size()) + ", expected " +
                                 std::to_string(env.dim()));
  }
}

}  // namespace

double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Environment::Environment(std::vector<Population> populations, Loss loss,
                         std::shared_ptr<const LabeledData> test_data)
    : populations_(std::move(populations)),
      loss_(loss),
      test_data_(std::move(test_data)) {
  if (populations_.empty()) {
    throw Error(Errc::invalid_size, "environment needs at least one population");
  }
  if (loss_.dim == 0) throw Error(Errc::shape, "loss dimension must be positive");
  kind_ = is_gaussian(populations_.front()) ? PopulationKind::gaussian_mean
                                            : PopulationKind::strategic_shift;
  double eps_sum = 0.0;
  double max_row_norm_sq = 0.0;
  for (const auto& p : populations_) {
    if (!(p.sensitivity >= 0.0) || !std::isfinite(p.sensitivity)) {
      throw Error(Errc::validation, "sensitivities must be finite and >= 0");
    }
    eps_sum += p.sensitivity;
    eps_max_ = std::max(eps_max_, p.sensitivity);
    if (is_gaussian(p) != (kind_ == PopulationKind::gaussian_mean)) {
      throw Error(Errc::unsupported_kind, "populations must all share one kind");
    }
    if (const auto* g = std::get_if<GaussianBase>(&p.base)) {
      if (static_cast<std::size_t>(g->mean.size()) != loss_.dim) {
        throw Error(Errc::shape, "gaussian mean dimension mismatch");
      }
      if (!(g->noise_var >= 0.0)) {
        throw Error(Errc::validation, "gaussian noise variance must be >= 0");
      }
    } else {
      const auto& data = std::get<StrategicBase>(p.base).data;
      if (!data || data->rows() == 0) {
        throw Error(Errc::validation, "strategic base dataset is empty");
      }
      if (data->dim() != loss_.dim) {
        throw Error(Errc::shape, "strategic dataset dimension mismatch");
      }
      max_row_norm_sq =
          std::max(max_row_norm_sq, data->features.rowwise().squaredNorm().maxCoeff());
    }
  }
  eps_avg_ = eps_sum / static_cast<double>(populations_.size());

  if (kind_ == PopulationKind::gaussian_mean) {
    if (loss_.kind != LossKind::quadratic) {
      throw Error(Errc::unsupported_kind, "gaussian populations use the quadratic loss");
    }
    mu_ = 1.0;
    smoothness_ = 1.0;
  } else {
    if (loss_.kind != LossKind::logistic) {
      throw Error(Errc::unsupported_kind, "strategic populations use the logistic loss");
    }
    if (!(loss_.beta > 0.0)) {
      throw Error(Errc::validation, "logistic regularizer beta must be > 0");
    }
    mu_ = loss_.beta;
    smoothness_ = loss_.beta + max_row_norm_sq / 4.0;
  }
  if (test_data_ && test_data_->rows() > 0 && test_data_->dim() != loss_.dim) {
    throw Error(Errc::shape, "test dataset dimension mismatch");
  }
}

Environment Environment::with_sensitivities(const std::vector<double>& eps) const {
  if (eps.size() != populations_.size()) {
    throw Error(Errc::invalid_size, "sensitivity list length mismatch");
  }
  auto pops = populations_;
  for (std::size_t i = 0; i < pops.size(); ++i) pops[i].sensitivity = eps[i];
  return Environment(std::move(pops), loss_, test_data_);
}

Environment Environment::subset(const std::vector<std::size_t>& agents) const {
  std::vector<Population> pops;
  for (std::size_t i : agents) pops.push_back(populations_.at(i));
  return Environment(std::move(pops), loss_, test_data_);
}

void sample_into(const Environment& env, std::size_t agent,
                 const Eigen::Ref<const Vector>& deployed, CounterStream& rng,
                 Sample& out) {
  check_theta(env, deployed, "deployed decision");
  const Population& p = env.population(agent);
  out.x.resize(static_cast<Eigen::Index>(env.dim()));
  if (const auto* g = std::get_if<GaussianBase>(&p.base)) {
    const double sd = std::sqrt(g->noise_var);
    for (Eigen::Index k = 0; k < out.x.size(); ++k) {
      const double noise = sd > 0.0 ? sd * rng.normal() : 0.0;
      out.x[k] = g->mean[k] + p.sensitivity * deployed[k] + noise;
    }
    out.y = 0.0;
  } else {
    const auto& data = *std::get<StrategicBase>(p.base).data;
    const auto row = static_cast<Eigen::Index>(rng.below(data.rows()));
    // Best response to a linear utility: X + eps_i * theta, label unchanged.
    out.x = data.features.row(row).transpose() + p.sensitivity * deployed;
    out.y = data.labels[row];
  }
}

Sample sample(const Environment& env, std::size_t agent,
              const Eigen::Ref<const Vector>& deployed, CounterStream& rng) {
  Sample z;
  sample_into(env, agent, deployed, rng, z);
  return z;
}

double loss_value(const Loss& loss, const Eigen::Ref<const Vector>& theta,
                  const Sample& z) {
  if (theta.size() != z.x.size()) throw Error(Errc::shape, "loss shape mismatch");
  if (loss.kind == LossKind::quadratic) return 0.5 * (theta - z.x).squaredNorm();
  const double s = z.x.dot(theta);
  // softplus(s) - y*s, arranged so neither branch cancels catastrophically.
  const double data_term = s > 0.0 ? (1.0 - z.y) * s + std::log1p(std::exp(-s))
                                   : std::log1p(std::exp(s)) - z.y * s;
  return data_term + 0.5 * loss.beta * theta.squaredNorm();
}

void accumulate_loss_gradient(const Loss& loss,
                              const Eigen::Ref<const Vector>& theta,
                              const Sample& z, double scale,
                              Eigen::Ref<Vector> out) {
  if (theta.size() != z.x.size() || out.size() != theta.size()) {
    throw Error(Errc::shape, "gradient shape mismatch");
  }
  if (loss.kind == LossKind::quadratic) {
    out += scale * (theta - z.x);
    return;
  }
  const double residual = sigmoid(z.x.dot(theta)) - z.y;
  out += (scale * residual) * z.x + (scale * loss.beta) * theta;
}

Vector loss_gradient(const Loss& loss, const Eigen::Ref<const Vector>& theta,
                     const Sample& z) {
  Vector g = Vector::Zero(theta.size());
  accumulate_loss_gradient(loss, theta, z, 1.0, g);
  return g;
}

Vector decoupled_risk_gradient(const Environment& env, std::size_t agent,
                               const Eigen::Ref<const Vector>& theta,
                               const Eigen::Ref<const Vector>& deployed) {
  check_theta(env, theta, "decision");
  check_theta(env, deployed, "deployed decision");
  const Population& p = env.population(agent);
  const auto* g = std::get_if<GaussianBase>(&p.base);
  if (g == nullptr) {
    throw Error(Errc::unsupported_kind,
                "closed-form decoupled gradient needs a gaussian population");
  }
  return theta - g->mean - p.sensitivity * deployed;
}

std::vector<double> sensitivity_multipliers(std::size_t n, double spread) {
  if (n == 0) throw Error(Errc::invalid_size, "need at least one agent");
  if (!(spread >= 0.0 && spread <= 1.0)) {
    throw Error(Errc::calibration, "spread must lie in [0, 1]");
  }
  std::vector<double> m(n, 1.0);
  if (n == 1) return m;
  for (std::size_t k = 0; k < n; ++k) {
    m[k] = 1.0 - spread +
           2.0 * spread * static_cast<double>(k) / static_cast<double>(n - 1);
  }
  return m;
}

std::vector<double> calibrate_sensitivities(const std::vector<double>& multipliers,
                                            double eps_avg) {
  if (multipliers.empty()) throw Error(Errc::invalid_size, "empty multiplier grid");
  const double mean = std::accumulate(multipliers.begin(), multipliers.end(), 0.0) /
                      static_cast<double>(multipliers.size());
  if (std::abs(mean - 1.0) > 1e-12) {
    throw Error(Errc::calibration, "sensitivity grid must average to 1, got " +
                                       std::to_string(mean));
  }
  if (std::any_of(multipliers.begin(), multipliers.end(),
                  [](double m) { return !(m >= 0.0); })) {
    throw Error(Errc::calibration, "sensitivity multipliers must be >= 0");
  }
  std::vector<double> eps(multipliers.size());
  std::transform(multipliers.begin(), multipliers.end(), eps.begin(),
                 [&](double m) { return eps_avg * m; });
  return eps;
}

Environment make_heterogeneous_suite(
    const SuiteOptions& options,
    const std::variant<GaussianSuiteParams, LogisticSuiteParams>& params) {
  const std::size_t n = options.n;
  if (n == 0) throw Error(Errc::invalid_size, "suite needs n >= 1");
  std::vector<double> eps;
  if (options.homogeneous) {
    eps.assign(n, options.eps_avg);
  } else if (options.multipliers) {
    if (options.multipliers->size() != n) {
      throw Error(Errc::calibration, "multiplier grid length must equal n");
    }
    eps = calibrate_sensitivities(*options.multipliers, options.eps_avg);
  } else {
    eps = calibrate_sensitivities(sensitivity_multipliers(n, options.spread),
                                  options.eps_avg);
  }

  std::vector<Population> pops(n);
  if (const auto* g = std::get_if<GaussianSuiteParams>(&params)) {
    if (g->means.size() != 1 && g->means.size() != n) {
      throw Error(Errc::invalid_size, "gaussian means: need 1 or n entries");
    }
    Vector pooled = Vector::Zero(g->means.front().size());
    for (const auto& m : g->means) pooled += m;
    pooled /= static_cast<double>(g->means.size());
    for (std::size_t i = 0; i < n; ++i) {
      const Vector& mean = options.homogeneous ? pooled
                           : g->means.size() == 1 ? g->means.front()
                                                  : g->means[i];
      pops[i] = Population{eps[i], GaussianBase{mean, g->noise_var}};
    }
    Loss loss{LossKind::quadratic, 0.0, static_cast<std::size_t>(pooled.size())};
    return Environment(std::move(pops), loss);
  }

  const auto& lp = std::get<LogisticSuiteParams>(params);
  if (lp.shards.size() != n) {
    throw Error(Errc::invalid_size, "logistic suite needs one shard per agent");
  }
  const std::size_t dim = lp.shards.front()->dim();
  std::shared_ptr<const LabeledData> pooled;
  if (options.homogeneous) {
    auto all = std::make_shared<LabeledData>();
    std::size_t rows = 0;
    for (const auto& s : lp.shards) rows += s->rows();
    all->features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    all->labels.resize(static_cast<Eigen::Index>(rows));
    Eigen::Index at = 0;
    for (const auto& s : lp.shards) {
      const auto r = static_cast<Eigen::Index>(s->rows());
      all->features.middleRows(at, r) = s->features;
      all->labels.segment(at, r) = s->labels;
      at += r;
    }
    pooled = std::move(all);
  }
  for (std::size_t i = 0; i < n; ++i) {
    pops[i] = Population{eps[i], StrategicBase{pooled ? pooled : lp.shards[i]}};
  }
  return Environment(std::move(pops), Loss{LossKind::logistic, lp.beta, dim},
                     lp.test_data);
}

std::vector<Vector> heterogeneous_means(std::size_t n, const Vector& center,
                                        double dispersion, std::uint64_t seed) {
  std::vector<Vector> means;
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, stream_id(StreamPurpose::synthetic, static_cast<std::uint32_t>(i)), 0);
    Vector m = center;
    for (Eigen::Index k = 0; k < m.size(); ++k) m[k] += dispersion * rng.normal();
    means.push_back(std::move(m));
  }
  return means;
}

std::vector<std::shared_ptr<const LabeledData>> synthetic_logistic_shards(
    std::size_t n, std::size_t rows_per_agent, std::size_t dim,
    double heterogeneity, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(dim);
  CounterStream global(seed, stream_id(StreamPurpose::synthetic, 0xffffff), 0);
  Vector w0(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    w0[k] = 2.0 * global.normal() / std::sqrt(static_cast<double>(dim));
  }
  std::vector<std::shared_ptr<const LabeledData>> shards;
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, stream_id(StreamPurpose::synthetic, static_cast<std::uint32_t>(i)), 1);
    Vector center(d), w(d);
    for (Eigen::Index k = 0; k < d; ++k) center[k] = heterogeneity * rng.normal();
    for (Eigen::Index k = 0; k < d; ++k) {
      w[k] = w0[k] + heterogeneity * rng.normal() / std::sqrt(static_cast<double>(dim));
    }
    const double bias = heterogeneity * rng.normal();
    auto shard = std::make_shared<LabeledData>();
    shard->features.resize(static_cast<Eigen::Index>(rows_per_agent), d);
    shard->labels.resize(static_cast<Eigen::Index>(rows_per_agent));
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(rows_per_agent); ++r) {
      for (Eigen::Index k = 0; k < d; ++k) {
        shard->features(r, k) = center[k] + rng.normal();
      }
      const double p = sigmoid(shard->features.row(r).dot(w) + bias);
      shard->labels[r] = rng.uniform() < p ? 1.0 : 0.0;
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace perfnet
