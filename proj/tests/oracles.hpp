#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's code paths (no Eigen solvers, no shared helpers) so agreement is
// evidence rather than tautology.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

// Cyclic Jacobi eigenvalues of a symmetric matrix.
inline std::vector<double> jacobi_eigenvalues(Mat a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  return ev;
}

// 1 - ||W - J/n||_2 for symmetric W.
inline double rho_by_jacobi(const Mat& w) {
  const std::size_t n = w.size();
  Mat b = w;
  for (auto& row : b)
    for (auto& v : row) v -= 1.0 / static_cast<double>(n);
  double m = 0.0;
  for (double e : jacobi_eigenvalues(b)) m = std::max(m, std::abs(e));
  return 1.0 - m;
}

// Circulant eigenvalues of the uniform 1/3 ring.
inline double ring_rho(std::size_t n) {
  double m = 0.0;
  for (std::size_t k = 1; k < n; ++k)
    m = std::max(m, std::abs((1.0 + 2.0 * std::cos(2.0 * M_PI * k / n)) / 3.0));
  return 1.0 - m;
}

inline bool connected(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (auto [a, b] : edges) parent[find(a)] = find(b);
  for (std::size_t i = 0; i < n; ++i)
    if (find(i) != find(0)) return false;
  return true;
}

// Central difference of f along each coordinate.
template <class F>
std::vector<double> central_difference(F f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double logistic_loss(const std::vector<double>& theta, const std::vector<double>& x,
                            double y, double beta) {
  double s = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s += x[k] * theta[k];
    sq += theta[k] * theta[k];
  }
  // log(1 + e^s) - y s, written as max(s, 0) + log1p(e^-|s|) - y s.
  return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))) - y * s + 0.5 * beta * sq;
}

// Least-squares slope of log y on log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace oracle
