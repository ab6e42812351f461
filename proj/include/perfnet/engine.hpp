#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "perfnet/common.hpp"
#include "perfnet/environment.hpp"
#include "perfnet/topology.hpp"

namespace perfnet {

/// gamma_t for t >= 1: either constant or a0 / (a1 + t).
struct StepSchedule {
  enum class Kind { constant, inverse_time };

  Kind kind = Kind::constant;
  double gamma = 0.01;
  double a0 = 1.0;
  double a1 = 0.0;

  static StepSchedule constant_step(double gamma);
  static StepSchedule inverse_time(double a0, double a1);

  /// Throws Errc::contract for t == 0 (step sizes are indexed from 1).
  double at(std::uint64_t t) const;

  bool operator==(const StepSchedule&) const = default;
};

inline double gamma(const StepSchedule& schedule, std::uint64_t t) {
  return schedule.at(t);
}

struct RunConfig {
  std::uint64_t iterations = 1000;  // T
  std::size_t batch = 1;
  std::uint64_t record_every = 1;
  std::uint64_t seed = 0;
  /// Shared initial decision; empty means the zero vector.
  Vector theta0;
  double divergence_threshold = 1e12;
  int threads = 1;
  /// Assert the average-preservation identity after every step.
  bool check_average = false;
};

/// Stacked decisions Theta^t (one agent per row) at iteration t. Sampling
/// streams are derived from (seed, agent, t), so the state needs no RNG
/// object of its own.
class SchemeState {
 public:
  SchemeState(AgentMatrix theta, std::uint64_t seed);
  /// Every agent starts at theta0.
  static SchemeState uniform(std::size_t agents, const Vector& theta0,
                             std::uint64_t seed);

  const AgentMatrix& theta() const noexcept { return theta_; }
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool diverged() const noexcept { return diverged_; }
  std::size_t agents() const noexcept {
    return static_cast<std::size_t>(theta_.rows());
  }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(theta_.cols());
  }
  /// Column mean of Theta^t.
  Vector average() const;

 private:
  friend class Engine;

  AgentMatrix theta_;
  std::uint64_t iteration_ = 0;
  std::uint64_t seed_ = 0;
  bool diverged_ = false;
};

/// Static mixing matrix or a cyclic time-varying schedule.
class Mixing {
 public:
  explicit Mixing(MixingMatrix w) : source_(std::move(w)) {}
  explicit Mixing(GraphSchedule s) : source_(std::move(s)) {}

  std::size_t agents() const;
  /// W used by the update producing iterate t (t >= 1).
  const Matrix& for_step(std::uint64_t t) const;
  /// rho of the static matrix; empty for schedules.
  std::optional<double> rho() const;

 private:
  std::variant<MixingMatrix, GraphSchedule> source_;
};

/// Called with (agent, t, deployed decision) for every Phase-1 deployment.
using DeploymentObserver = std::function<void(
    std::size_t, std::uint64_t, const Eigen::Ref<const Vector>&)>;

struct StepOptions {
  std::size_t batch = 1;
  double divergence_threshold = 1e12;
  int threads = 1;
  bool check_average = false;
  DeploymentObserver observer;
};

/// One DSGD-GD iteration with reusable scratch buffers.
class Engine {
 public:
  Engine(const Environment& env, StepOptions options);

  /// Phase 1: every agent deploys theta_i^t and draws `batch` samples.
  /// Phase 2: theta_i^{t+1} = sum_j W_ij theta_j^t - gamma * mean gradient,
  /// with the gradient taken at theta_i^t. Sets the diverged flag instead of
  /// throwing when the update leaves the finite range.
  void step(SchemeState& state, const Matrix& w, double gamma);

 private:
  const Environment& env_;
  StepOptions options_;
  AgentMatrix grads_;
  AgentMatrix next_;
  std::vector<Sample> scratch_;
};

SchemeState dsgd_gd_step(const SchemeState& state, const Matrix& w,
                         const Environment& env, double gamma,
                         const StepOptions& options = {});

struct RunOutcome {
  SchemeState state;
  bool diverged = false;
  std::optional<std::uint64_t> diverged_at;
};

/// Invoked at t = 0, every `record_every` iterations, and at the final
/// iteration.
using StateSink = std::function<void(const SchemeState&)>;

RunOutcome run(const RunConfig& config, const Environment& env,
               const Mixing& mixing, const StepSchedule& schedule,
               const StateSink& sink);

struct BiasProbe {
  Vector deployed_gradient_mean;  // Monte Carlo mean of grad l(theta; Z)
  Vector decoupled_gradient;      // grad f_i(theta; theta)
  double difference_norm = 0.0;
};

/// Compares the Monte Carlo mean of the deployed-sample gradient against the
/// exact decoupled gradient. Gaussian populations only.
BiasProbe bias_probe(const Environment& env, std::size_t agent,
                     const Vector& theta, std::size_t mc, std::uint64_t seed);

}  // namespace perfnet
