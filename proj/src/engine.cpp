#include "perfnet/engine.hpp"

#include <cmath>
#include <string>

namespace perfnet {

StepSchedule StepSchedule::constant_step(double gamma) {
  if (!(gamma > 0.0)) throw Error(Errc::config, "constant step must be > 0");
  return StepSchedule{Kind::constant, gamma, 1.0, 0.0};
}

StepSchedule StepSchedule::inverse_time(double a0, double a1) {
  if (!(a0 > 0.0) || !(a1 >= 0.0)) {
    throw Error(Errc::config, "inverse-time step needs a0 > 0 and a1 >= 0");
  }
  return StepSchedule{Kind::inverse_time, 0.0, a0, a1};
}

double StepSchedule::at(std::uint64_t t) const {
  if (t == 0) throw Error(Errc::contract, "step sizes are indexed from t = 1");
  if (kind == Kind::constant) return gamma;
  return a0 / (a1 + static_cast<double>(t));
}

SchemeState::SchemeState(AgentMatrix theta, std::uint64_t seed)
    : theta_(std::move(theta)), seed_(seed) {
  if (theta_.rows() == 0 || theta_.cols() == 0) {
    throw Error(Errc::shape, "scheme state needs at least one agent and dimension");
  }
  diverged_ = !theta_.allFinite();
}

SchemeState SchemeState::uniform(std::size_t agents, const Vector& theta0,
                                 std::uint64_t seed) {
  AgentMatrix theta(static_cast<Eigen::Index>(agents), theta0.size());
  theta.rowwise() = theta0.transpose();
  return SchemeState(std::move(theta), seed);
}

Vector SchemeState::average() const {
  return theta_.colwise().mean().transpose();
}

std::size_t Mixing::agents() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, MixingMatrix>) {
          return s.size();
        } else {
          return s.agents();
        }
      },
      source_);
}

const Matrix& Mixing::for_step(std::uint64_t t) const {
  if (const auto* w = std::get_if<MixingMatrix>(&source_)) return w->weights();
  return std::get<GraphSchedule>(source_).mixing_for_step(t);
}

std::optional<double> Mixing::rho() const {
  if (const auto* w = std::get_if<MixingMatrix>(&source_)) return w->rho();
  return std::nullopt;
}

Engine::Engine(const Environment& env, StepOptions options)
    : env_(env), options_(std::move(options)), scratch_(env.agents()) {
  if (options_.batch == 0) throw Error(Errc::config, "batch must be >= 1");
  if (options_.threads < 1) options_.threads = 1;
}

void Engine::step(SchemeState& state, const Matrix& w, double gamma) {
  const auto n = static_cast<Eigen::Index>(env_.agents());
  const auto d = static_cast<Eigen::Index>(env_.dim());
  if (state.theta_.rows() != n || state.theta_.cols() != d) {
    throw Error(Errc::shape, "scheme state does not match the environment");
  }
  if (w.rows() != n || w.cols() != n) {
    throw Error(Errc::shape, "mixing matrix does not match the agent count");
  }
  if (state.diverged_) {
    throw Error(Errc::contract, "cannot step a diverged state");
  }
  grads_.setZero(n, d);
  const std::uint64_t t = state.iteration_;
  const double scale = 1.0 / static_cast<double>(options_.batch);
  const AgentMatrix& theta = state.theta_;

#pragma omp parallel for schedule(static) num_threads(options_.threads) if (options_.threads > 1)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto agent = static_cast<std::size_t>(i);
    CounterStream rng(state.seed_,
                      stream_id(StreamPurpose::sampling, static_cast<std::uint32_t>(agent)), t);
    const auto deployed = theta.row(i).transpose();
    if (options_.observer) options_.observer(agent, t, deployed);
    auto g = grads_.row(i).transpose();
    const Population& p = env_.population(agent);
    if (const auto* s = std::get_if<StrategicBase>(&p.base)) {
      // Same draws as sample_into, without materialising X + eps * theta:
      // the shifted score is <X, theta> + eps ||theta||^2 and the shift
      // contributes (sum of residuals) * eps * theta to the gradient.
      const LabeledData& data = *s->data;
      const double offset = p.sensitivity * deployed.squaredNorm();
      double residual_sum = 0.0;
      for (std::size_t b = 0; b < options_.batch; ++b) {
        const auto row = static_cast<Eigen::Index>(rng.below(data.rows()));
        const auto x = data.features.row(row);
        const double r = sigmoid(x.dot(deployed.transpose()) + offset) - data.labels[row];
        g.noalias() += r * x.transpose();
        residual_sum += r;
      }
      g = scale * (g + (residual_sum * p.sensitivity) * deployed) +
          env_.loss().beta * deployed;
    } else {
      Sample& z = scratch_[agent];
      for (std::size_t b = 0; b < options_.batch; ++b) {
        sample_into(env_, agent, deployed, rng, z);
        accumulate_loss_gradient(env_.loss(), deployed, z, scale, g);
      }
    }
  }

  next_.noalias() = w * theta;
  next_ -= gamma * grads_;

  if (options_.check_average) {
    const Vector expected = (theta.colwise().mean() - gamma * grads_.colwise().mean()).transpose();
    const Vector actual = next_.colwise().mean().transpose();
    const double err = (expected - actual).norm();
    if (err > 1e-10 * std::max(1.0, expected.norm())) {
      throw Error(Errc::invariant, "average-preservation violated at t=" +
                                       std::to_string(t) + " (error " +
                                       std::to_string(err) + ")");
    }
  }

  state.theta_.swap(next_);
  state.iteration_ = t + 1;
  if (!state.theta_.allFinite() ||
      state.theta_.cwiseAbs().maxCoeff() > options_.divergence_threshold) {
    state.diverged_ = true;
  }
}

SchemeState dsgd_gd_step(const SchemeState& state, const Matrix& w,
                         const Environment& env, double gamma,
                         const StepOptions& options) {
  SchemeState next = state;
  Engine engine(env, options);
  engine.step(next, w, gamma);
  return next;
}

RunOutcome run(const RunConfig& config, const Environment& env,
               const Mixing& mixing, const StepSchedule& schedule,
               const StateSink& sink) {
  if (config.batch == 0 || config.record_every == 0) {
    throw Error(Errc::config, "batch and record_every must be >= 1");
  }
  if (mixing.agents() != env.agents()) {
    throw Error(Errc::shape, "topology and environment disagree on n");
  }
  Vector theta0 = config.theta0.size() == 0
                      ? Vector::Zero(static_cast<Eigen::Index>(env.dim()))
                      : config.theta0;
  if (static_cast<std::size_t>(theta0.size()) != env.dim()) {
    throw Error(Errc::shape, "theta0 dimension mismatch");
  }
  RunOutcome out{SchemeState::uniform(env.agents(), theta0, config.seed), false, std::nullopt};
  StepOptions options;
  options.batch = config.batch;
  options.divergence_threshold = config.divergence_threshold;
  options.threads = config.threads;
  options.check_average = config.check_average;
  Engine engine(env, options);

  if (sink) sink(out.state);
  for (std::uint64_t t = 1; t <= config.iterations; ++t) {
    engine.step(out.state, mixing.for_step(t), schedule.at(t));
    if (out.state.diverged()) {
      out.diverged = true;
      out.diverged_at = t;
      if (sink && out.state.theta().allFinite()) sink(out.state);
      break;
    }
    if (sink && (t % config.record_every == 0 || t == config.iterations)) {
      sink(out.state);
    }
  }
  return out;
}

BiasProbe bias_probe(const Environment& env, std::size_t agent,
                     const Vector& theta, std::size_t mc, std::uint64_t seed) {
  if (env.kind() != PopulationKind::gaussian_mean) {
    throw Error(Errc::unsupported_kind, "bias probe needs a gaussian population");
  }
  if (mc == 0) throw Error(Errc::contract, "bias probe needs mc >= 1");
  BiasProbe probe;
  probe.decoupled_gradient = decoupled_risk_gradient(env, agent, theta, theta);
  probe.deployed_gradient_mean = Vector::Zero(theta.size());
  CounterStream rng(seed, stream_id(StreamPurpose::probe, static_cast<std::uint32_t>(agent)), 0);
  Sample z;
  // Running mean: exact when every sample gradient is identical (sigma = 0).
  for (std::size_t k = 0; k < mc; ++k) {
    sample_into(env, agent, theta, rng, z);
    const Vector g = loss_gradient(env.loss(), theta, z);
    probe.deployed_gradient_mean += (g - probe.deployed_gradient_mean) / static_cast<double>(k + 1);
  }
  probe.difference_norm = (probe.deployed_gradient_mean - probe.decoupled_gradient).norm();
  return probe;
}

}  // namespace perfnet
