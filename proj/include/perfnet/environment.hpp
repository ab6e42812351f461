#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "perfnet/common.hpp"
#include "perfnet/rng.hpp"

namespace perfnet {

/// Feature rows with binary labels.
struct LabeledData {
  AgentMatrix features;  // one sample per row
  Vector labels;         // 0 or 1

  std::size_t rows() const noexcept {
    return static_cast<std::size_t>(features.rows());
  }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(features.cols());
  }
};

/// D_i(theta) = N(mean + eps_i * theta, noise_var * I).
struct GaussianBase {
  Vector mean;
  double noise_var = 0.0;
};

/// D_i(theta): draw (X, Y) from the base rows, deploy X + eps_i * theta.
struct StrategicBase {
  std::shared_ptr<const LabeledData> data;
};

struct Population {
  double sensitivity = 0.0;
  std::variant<GaussianBase, StrategicBase> base;
};

enum class PopulationKind { gaussian_mean, strategic_shift };
enum class LossKind { quadratic, logistic };

struct Loss {
  LossKind kind = LossKind::quadratic;
  double beta = 0.0;  // logistic ridge weight
  std::size_t dim = 1;
};

/// A sample Z. For the quadratic loss only `x` is used.
struct Sample {
  Vector x;
  double y = 0.0;
};

/// n decision-dependent populations sharing one loss. Gaussian populations
/// pair with the quadratic loss and strategic ones with the logistic loss.
class Environment {
 public:
  Environment(std::vector<Population> populations, Loss loss,
              std::shared_ptr<const LabeledData> test_data = nullptr);

  std::size_t agents() const noexcept { return populations_.size(); }
  std::size_t dim() const noexcept { return loss_.dim; }
  PopulationKind kind() const noexcept { return kind_; }
  const Loss& loss() const noexcept { return loss_; }
  const Population& population(std::size_t i) const {
    return populations_.at(i);
  }
  const std::vector<Population>& populations() const noexcept {
    return populations_;
  }
  const std::shared_ptr<const LabeledData>& test_data() const noexcept {
    return test_data_;
  }

  double eps_avg() const noexcept { return eps_avg_; }
  double eps_max() const noexcept { return eps_max_; }
  /// Strong convexity of f(.; theta'): 1 for quadratic, beta for logistic.
  double strong_convexity() const noexcept { return mu_; }
  /// Smoothness: 1 for quadratic; beta + max ||X||^2 / 4 over base rows.
  double smoothness() const noexcept { return smoothness_; }

  /// Same populations with sensitivities replaced.
  Environment with_sensitivities(const std::vector<double>& eps) const;
  /// Subset of agents, in the given order.
  Environment subset(const std::vector<std::size_t>& agents) const;

 private:
  std::vector<Population> populations_;
  Loss loss_;
  std::shared_ptr<const LabeledData> test_data_;
  PopulationKind kind_;
  double eps_avg_ = 0.0;
  double eps_max_ = 0.0;
  double mu_ = 1.0;
  double smoothness_ = 1.0;
};

/// Draws Z ~ D_i(deployed) into `out`, reusing its storage.
void sample_into(const Environment& env, std::size_t agent,
                 const Eigen::Ref<const Vector>& deployed, CounterStream& rng,
                 Sample& out);
Sample sample(const Environment& env, std::size_t agent,
              const Eigen::Ref<const Vector>& deployed, CounterStream& rng);

double loss_value(const Loss& loss, const Eigen::Ref<const Vector>& theta,
                  const Sample& z);
Vector loss_gradient(const Loss& loss, const Eigen::Ref<const Vector>& theta,
                     const Sample& z);
/// out += scale * grad l(theta; z)
void accumulate_loss_gradient(const Loss& loss,
                              const Eigen::Ref<const Vector>& theta,
                              const Sample& z, double scale,
                              Eigen::Ref<Vector> out);

/// grad_theta f_i(theta; deployed), exact. Gaussian populations only.
Vector decoupled_risk_gradient(const Environment& env, std::size_t agent,
                               const Eigen::Ref<const Vector>& theta,
                               const Eigen::Ref<const Vector>& deployed);

/// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

/// Multipliers 1-spread .. 1+spread, evenly spaced over n agents.
std::vector<double> sensitivity_multipliers(std::size_t n, double spread);
/// eps_i = eps_avg * multiplier_i; multipliers must average to 1 within
/// 1e-12 (Errc::calibration otherwise).
std::vector<double> calibrate_sensitivities(const std::vector<double>& multipliers,
                                            double eps_avg);

struct GaussianSuiteParams {
  /// One mean per agent, or a single mean shared by all agents.
  std::vector<Vector> means;
  double noise_var = 0.0;
};

struct LogisticSuiteParams {
  /// One shard per agent.
  std::vector<std::shared_ptr<const LabeledData>> shards;
  double beta = 1e-4;
  std::shared_ptr<const LabeledData> test_data;
};

struct SuiteOptions {
  std::size_t n = 1;
  double eps_avg = 0.0;
  double spread = 0.0;
  /// Explicit multipliers override `spread`.
  std::optional<std::vector<double>> multipliers;
  /// All eps_i = eps_avg and every agent sees the pooled base data.
  bool homogeneous = false;
};

Environment make_heterogeneous_suite(
    const SuiteOptions& options,
    const std::variant<GaussianSuiteParams, LogisticSuiteParams>& params);

/// Per-agent means center + dispersion * N(0, I), keyed by seed.
std::vector<Vector> heterogeneous_means(std::size_t n, const Vector& center,
                                        double dispersion, std::uint64_t seed);

/// Binary classification shards in the spirit of a federated synthetic
/// benchmark: agent i draws features around its own center and labels from
/// its own perturbed logistic model. `heterogeneity` scales how far centers
/// and models drift between agents.
std::vector<std::shared_ptr<const LabeledData>> synthetic_logistic_shards(
    std::size_t n, std::size_t rows_per_agent, std::size_t dim,
    double heterogeneity, std::uint64_t seed);

}  // namespace perfnet
