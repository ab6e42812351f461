#pragma once

#include <memory>
#include <vector>

#include "perfnet/common.hpp"
#include "perfnet/environment.hpp"
#include "perfnet/rng.hpp"

namespace testutil {

using namespace perfnet;

template <class F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invariant;  // sentinel: nothing thrown
}

inline Environment gaussian_env(const std::vector<double>& eps, double zbar, double noise_var,
                                std::size_t dim = 1) {
  std::vector<Population> pops;
  for (double e : eps) pops.push_back({e, GaussianBase{Vector::Constant(dim, zbar), noise_var}});
  return Environment(std::move(pops), Loss{LossKind::quadratic, 0.0, dim});
}

inline Environment gaussian_env_means(const std::vector<double>& eps,
                                      const std::vector<double>& means, double noise_var) {
  std::vector<Population> pops;
  for (std::size_t i = 0; i < eps.size(); ++i)
    pops.push_back({eps[i], GaussianBase{Vector::Constant(1, means[i]), noise_var}});
  return Environment(std::move(pops), Loss{LossKind::quadratic, 0.0, 1});
}

inline std::shared_ptr<LabeledData> random_data(std::size_t rows, std::size_t dim,
                                                std::uint64_t seed) {
  auto d = std::make_shared<LabeledData>();
  d->features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  d->labels.resize(static_cast<Eigen::Index>(rows));
  CounterStream rng(seed, stream_id(StreamPurpose::misc, 99), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    double score = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = rng.normal();
      d->features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
      score += (k % 2 == 0 ? 1.0 : -0.5) * v;
    }
    d->labels[static_cast<Eigen::Index>(r)] = rng.uniform() < sigmoid(2.0 * score) ? 1.0 : 0.0;
  }
  return d;
}

inline Environment strategic_env(const std::vector<double>& eps, std::size_t rows,
                                 std::size_t dim, double beta, std::uint64_t seed = 1) {
  std::vector<Population> pops;
  for (std::size_t i = 0; i < eps.size(); ++i)
    pops.push_back({eps[i], StrategicBase{random_data(rows, dim, seed + i)}});
  return Environment(std::move(pops), Loss{LossKind::logistic, beta, dim},
                     random_data(rows, dim, seed + 1000));
}

}  // namespace testutil
