#include "perfnet/oracle.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "perfnet/rng.hpp"

namespace perfnet {

namespace {

void require_dim(const Environment& env, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != env.dim()) {
    throw Error(Errc::shape, "decision dimension mismatch");
  }
}

/// Curvature bound of the frozen logistic objective at a fixed deployment:
/// beta + lambda_max(average shifted second moment) / 4.
double frozen_logistic_smoothness(const Environment& env, const Vector& deployed) {
  const auto d = static_cast<Eigen::Index>(env.dim());
  Matrix second = Matrix::Zero(d, d);
  for (const auto& p : env.populations()) {
    const auto& data = *std::get<StrategicBase>(p.base).data;
    const Vector mean = data.features.colwise().mean().transpose();
    const auto m = static_cast<double>(data.rows());
    // E[(X + s)(X + s)^T] with s = eps_i * deployed.
    const Vector s = p.sensitivity * deployed;
    Matrix moment = (data.features.transpose() * data.features) / m;
    moment += mean * s.transpose() + s * mean.transpose() + s * s.transpose();
    second += moment;
  }
  second /= static_cast<double>(env.agents());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(second, Eigen::EigenvaluesOnly);
  return env.loss().beta + solver.eigenvalues().maxCoeff() / 4.0;
}

}  // namespace

Vector closed_form_multi_ps(const Environment& env) {
  if (env.kind() != PopulationKind::gaussian_mean) {
    throw Error(Errc::unsupported_kind, "closed-form Multi-PS needs gaussian populations");
  }
  if (env.eps_avg() >= 1.0) {
    throw Error(Errc::no_fixed_point,
                "no Multi-PS solution: eps_avg = " + std::to_string(env.eps_avg()) +
                    " >= mu/L = 1");
  }
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(env.dim()));
  for (const auto& p : env.populations()) sum += std::get<GaussianBase>(p.base).mean;
  return sum / (static_cast<double>(env.agents()) * (1.0 - env.eps_avg()));
}

Vector frozen_gradient(const Environment& env, const Vector& theta,
                       const Vector& deployed) {
  require_dim(env, theta);
  require_dim(env, deployed);
  Vector total = Vector::Zero(theta.size());
  if (env.kind() == PopulationKind::gaussian_mean) {
    for (std::size_t i = 0; i < env.agents(); ++i) {
      total += decoupled_risk_gradient(env, i, theta, deployed);
    }
    return total / static_cast<double>(env.agents());
  }
  const double beta = env.loss().beta;
  for (const auto& p : env.populations()) {
    const auto& data = *std::get<StrategicBase>(p.base).data;
    const Vector shift = p.sensitivity * deployed;
    const Vector scores = (data.features * theta).array() + shift.dot(theta);
    Vector residual(scores.size());
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
      residual[k] = sigmoid(scores[k]) - data.labels[k];
    }
    const double m = static_cast<double>(data.rows());
    total += (data.features.transpose() * residual + shift * residual.sum()) / m;
  }
  total /= static_cast<double>(env.agents());
  total += beta * theta;
  return total;
}

MapResult apply_map(const Environment& env, const Vector& deployed,
                    const InnerSolverOptions& options, const Vector* warm_start) {
  require_dim(env, deployed);
  MapResult out;
  if (env.kind() == PopulationKind::gaussian_mean) {
    // argmin of (1/2n) sum ||theta - mean_i - eps_i deployed||^2.
    Vector value = Vector::Zero(deployed.size());
    for (const auto& p : env.populations()) {
      value += std::get<GaussianBase>(p.base).mean + p.sensitivity * deployed;
    }
    out.value = value / static_cast<double>(env.agents());
    out.gradient_norm = 0.0;
    out.converged = true;
    return out;
  }
  const double step = 1.0 / frozen_logistic_smoothness(env, deployed);
  Vector theta = warm_start ? *warm_start : deployed;
  require_dim(env, theta);
  Vector grad = frozen_gradient(env, theta, deployed);
  std::size_t it = 0;
  while (grad.norm() > options.gradient_tol && it < options.max_iterations) {
    theta -= step * grad;
    grad = frozen_gradient(env, theta, deployed);
    ++it;
  }
  out.value = std::move(theta);
  out.gradient_norm = grad.norm();
  out.iterations = it;
  out.converged = out.gradient_norm <= options.gradient_tol;
  return out;
}

FixedPointResult repeated_gd_fixed_point(const Environment& env,
                                         const Vector& theta0,
                                         const FixedPointOptions& options) {
  require_dim(env, theta0);
  FixedPointResult out;
  Vector theta = theta0;
  while (out.deployments < options.max_deployments) {
    const MapResult next = apply_map(env, theta, options.inner, &theta);
    ++out.deployments;
    if (!next.value.allFinite() ||
        next.value.lpNorm<Eigen::Infinity>() > options.divergence_threshold) {
      out.theta_ps = next.value;
      out.residual = std::numeric_limits<double>::infinity();
      out.diverged = true;
      return out;
    }
    const double step = (next.value - theta).norm();
    if (step <= options.tol) {
      // theta is the returned point; its residual against M is `step`.
      out.theta_ps = theta;
      out.residual = step;
      out.converged = true;
      return out;
    }
    theta = next.value;
  }
  out.theta_ps = theta;
  out.residual = (apply_map(env, theta, options.inner, &theta).value - theta).norm();
  return out;
}

ContractionReport contraction_probe(const Environment& env, std::size_t pairs,
                                    double radius, const Vector& center,
                                    std::uint64_t seed,
                                    const InnerSolverOptions& inner) {
  require_dim(env, center);
  ContractionReport report;
  report.theoretical_bound =
      env.eps_avg() * env.smoothness() / env.strong_convexity();
  const auto d = center.size();
  auto draw = [&](CounterStream& rng) {
    Vector dir(d);
    for (Eigen::Index k = 0; k < d; ++k) dir[k] = rng.normal();
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    return Vector(center + r * dir / dir.norm());
  };
  for (std::size_t k = 0; k < pairs; ++k) {
    CounterStream rng(seed, stream_id(StreamPurpose::probe, 0), k);
    const Vector a = draw(rng);
    const Vector b = draw(rng);
    const double gap = (a - b).norm();
    if (gap == 0.0) continue;
    const Vector ma = apply_map(env, a, inner).value;
    const Vector mb = apply_map(env, b, inner).value;
    report.empirical_ratio = std::max(report.empirical_ratio, (ma - mb).norm() / gap);
    ++report.pairs;
  }
  return report;
}

ExistenceVerdict existence_check(double eps_avg, double mu, double smoothness,
                                 InfluenceModel model, std::size_t n) {
  if (!(mu > 0.0) || !(smoothness > 0.0)) {
    throw Error(Errc::contract, "existence check needs mu, L > 0");
  }
  ExistenceVerdict v;
  v.threshold = mu / smoothness;
  v.sensitivity = model == InfluenceModel::local
                      ? eps_avg
                      : std::sqrt(static_cast<double>(n)) * eps_avg;
  v.exists = v.sensitivity < v.threshold;
  return v;
}

double competitive_threshold(double mu, double smoothness, std::size_t n) {
  return mu / (std::sqrt(static_cast<double>(n)) * smoothness);
}

}  // namespace perfnet
