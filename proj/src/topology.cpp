#include "perfnet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

namespace perfnet {

Graph::Graph(std::size_t n, std::span<const Edge> edges) : adjacency_(n) {
  if (n == 0) throw Error(Errc::invalid_size, "graph needs at least one agent");
  for (const auto& [i, j] : edges) {
    if (i >= n || j >= n) {
      throw Error(Errc::invalid_size, "edge (" + std::to_string(i) + "," +
                                          std::to_string(j) +
                                          ") out of range for n=" +
                                          std::to_string(n));
    }
    if (i == j) continue;
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& list : adjacency_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= size() || j >= size()) return false;
  if (i == j) return true;
  const auto& list = adjacency_[i];
  return std::binary_search(list.begin(), list.end(), j);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j : adjacency_[i]) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

bool Graph::connected() const {
  std::vector<char> seen(size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == size();
}

bool Graph::regular() const {
  return std::all_of(adjacency_.begin(), adjacency_.end(), [&](const auto& l) {
    return l.size() == adjacency_.front().size();
  });
}

Graph build_ring(std::size_t n) {
  if (n == 0) throw Error(Errc::invalid_size, "ring needs n >= 1");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  if (n > 2) edges.emplace_back(n - 1, 0);
  return Graph(n, edges);
}

Graph build_complete(std::size_t n) {
  if (n == 0) throw Error(Errc::invalid_size, "complete graph needs n >= 1");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  }
  return Graph(n, edges);
}

Graph build_star(std::size_t n, std::size_t center) {
  if (n == 0) throw Error(Errc::invalid_size, "star needs n >= 1");
  if (center >= n) throw Error(Errc::invalid_size, "star center out of range");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != center) edges.emplace_back(center, i);
  }
  return Graph(n, edges);
}

Graph graph_union(std::span<const Graph> graphs) {
  if (graphs.empty()) throw Error(Errc::invalid_size, "empty graph union");
  const std::size_t n = graphs.front().size();
  std::vector<Edge> edges;
  for (const auto& g : graphs) {
    if (g.size() != n) {
      throw Error(Errc::invalid_size, "graph union with mismatched n");
    }
    const auto e = g.edges();
    edges.insert(edges.end(), e.begin(), e.end());
  }
  return Graph(n, edges);
}

void check_doubly_stochastic(const Matrix& w, double tol) {
  if (w.rows() == 0 || w.rows() != w.cols()) {
    throw Error(Errc::validation, "mixing matrix must be square and nonempty");
  }
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw Error(Errc::validation, "mixing matrix entries must be finite and >= 0");
  }
  if (w != w.transpose()) {
    throw Error(Errc::validation, "mixing matrix must be symmetric");
  }
  const double row_dev = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double col_dev = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
  if (row_dev >= tol || col_dev >= tol) {
    throw Error(Errc::validation, "mixing matrix is not doubly stochastic");
  }
}

double mixing_norm(const Matrix& w) {
  const auto n = w.rows();
  const Matrix centered =
      w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Matrix> solver(centered,
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_gap(const Matrix& w) {
  check_doubly_stochastic(w);
  const double rho = std::min(1.0, 1.0 - mixing_norm(w));
  if (!(rho > 1e-12)) {
    throw Error(Errc::not_connected,
                "mixing matrix has spectral gap 0: the graph is disconnected");
  }
  return rho;
}

MixingMatrix MixingMatrix::from_weights(Matrix weights) {
  const double rho = spectral_gap(weights);
  return MixingMatrix(std::move(weights), rho);
}

MixingMatrix uniform_neighbor_weights(const Graph& g) {
  if (!g.regular()) {
    throw Error(Errc::not_regular,
                "uniform neighbor weights need a regular graph; use metropolis");
  }
  const auto n = static_cast<Eigen::Index>(g.size());
  const double w = 1.0 / static_cast<double>(g.degree(0) + 1);
  Matrix weights = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    weights(i, i) = w;
    for (std::size_t j : g.neighbors(static_cast<std::size_t>(i))) {
      weights(i, static_cast<Eigen::Index>(j)) = w;
    }
  }
  return MixingMatrix::from_weights(std::move(weights));
}

Matrix metropolis_matrix(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Matrix weights = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j : g.neighbors(i)) {
      weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          1.0 / (1.0 + static_cast<double>(std::max(g.degree(i), g.degree(j))));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    // Diagonal last: summing the off-diagonal row keeps W exactly symmetric.
    double off = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) off += weights(i, j);
    }
    weights(i, i) = 1.0 - off;
  }
  return weights;
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (!g.connected()) {
    throw Error(Errc::not_connected, "metropolis weights need a connected graph");
  }
  return MixingMatrix::from_weights(metropolis_matrix(g));
}

GraphSchedule::GraphSchedule(std::vector<Graph> graphs, std::size_t window,
                             Weights weights)
    : graphs_(std::move(graphs)), window_(window) {
  if (graphs_.empty()) throw Error(Errc::invalid_size, "empty graph schedule");
  if (window_ == 0) throw Error(Errc::invalid_size, "schedule window must be >= 1");
  for (const auto& g : graphs_) {
    if (g.size() != graphs_.front().size()) {
      throw Error(Errc::invalid_size, "schedule graphs must share n");
    }
    Matrix w;
    if (weights == Weights::uniform) {
      if (!g.regular()) {
        throw Error(Errc::not_regular, "uniform schedule weights need regular graphs");
      }
      const auto n = static_cast<Eigen::Index>(g.size());
      const double v = 1.0 / static_cast<double>(g.degree(0) + 1);
      w = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        w(i, i) = v;
        for (std::size_t j : g.neighbors(static_cast<std::size_t>(i))) {
          w(i, static_cast<Eigen::Index>(j)) = v;
        }
      }
    } else {
      w = metropolis_matrix(g);
    }
    check_doubly_stochastic(w);
    weights_.push_back(std::move(w));
  }
}

const Matrix& GraphSchedule::mixing_for_step(std::uint64_t t) const {
  if (t == 0) throw Error(Errc::contract, "schedule steps are indexed from 1");
  return weights_[static_cast<std::size_t>((t - 1) % weights_.size())];
}

namespace {

bool window_connected(const std::vector<Graph>& graphs, std::size_t start,
                      std::size_t window) {
  std::vector<Graph> slice;
  slice.reserve(window);
  for (std::size_t k = 0; k < window; ++k) {
    slice.push_back(graphs[(start + k) % graphs.size()]);
  }
  return graph_union(slice).connected();
}

}  // namespace

ScheduleCertificate validate_schedule(const GraphSchedule& schedule) {
  const auto& graphs = schedule.graphs();
  ScheduleCertificate cert;
  for (std::size_t b = 1; b <= schedule.window(); ++b) {
    bool all = true;
    for (std::size_t t = 0; t < graphs.size() && all; ++t) {
      all = window_connected(graphs, t, b);
    }
    if (all) {
      cert.connected = true;
      cert.window = b;
      return cert;
    }
  }
  for (std::size_t t = 0; t < graphs.size(); ++t) {
    if (!window_connected(graphs, t, schedule.window())) {
      cert.violation = t;
      break;
    }
  }
  return cert;
}

GraphSchedule alternating_ring_schedule(std::size_t n) {
  if (n < 3) throw Error(Errc::invalid_size, "alternating ring schedule needs n >= 3");
  std::vector<Edge> even, odd;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    (i % 2 == 0 ? even : odd).emplace_back(i, i + 1);
  }
  // Closing edge: with even n it completes the perfect matching on odd
  // positions; with odd n vertex n-1 already has an odd-side edge.
  odd.emplace_back(n - 1, 0);
  std::vector<Graph> graphs{Graph(n, even), Graph(n, odd)};
  return GraphSchedule(std::move(graphs), 2);
}

std::vector<Edge> read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open edge list " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    long long i = 0, j = 0;
    if (!(fields >> i)) continue;
    std::string rest;
    if (!(fields >> j) || i < 0 || j < 0 || (fields >> rest)) {
      throw Error(Errc::config, path.string() + ":" + std::to_string(lineno) +
                                    ": expected 'i j'");
    }
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  return edges;
}

std::vector<std::vector<Edge>> read_schedule_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open schedule " + path.string());
  std::vector<std::vector<Edge>> blocks(1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    if (first == "---") {
      blocks.emplace_back();
      continue;
    }
    long long i = 0, j = 0;
    std::istringstream pair(line);
    std::string rest;
    if (!(pair >> i >> j) || i < 0 || j < 0 || (pair >> rest)) {
      throw Error(Errc::config, path.string() + ":" + std::to_string(lineno) +
                                    ": expected 'i j' or '---'");
    }
    blocks.back().emplace_back(static_cast<std::size_t>(i),
                               static_cast<std::size_t>(j));
  }
  return blocks;
}

}  // namespace perfnet
