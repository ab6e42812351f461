#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "perfnet/common.hpp"

namespace perfnet {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected communication graph on agents 0..n-1. Every vertex carries an
/// implicit self-loop; `degree` and `neighbors` exclude it.
class Graph {
 public:
  /// Edges may be given in either orientation and may repeat; self-loops in
  /// the list are accepted and ignored.
  Graph(std::size_t n, std::span<const Edge> edges);

  std::size_t size() const noexcept { return adjacency_.size(); }
  bool has_edge(std::size_t i, std::size_t j) const;
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const {
    return adjacency_.at(i);
  }
  /// Edges with i < j, sorted.
  std::vector<Edge> edges() const;
  bool connected() const;
  bool regular() const;

 private:
  std::vector<std::vector<std::size_t>> adjacency_;
};

Graph build_ring(std::size_t n);
Graph build_complete(std::size_t n);
Graph build_star(std::size_t n, std::size_t center = 0);
/// Union of edge sets; all graphs must share n.
Graph graph_union(std::span<const Graph> graphs);

/// Doubly stochastic symmetric weights plus the spectral-gap certificate
/// rho = 1 - ||W - (1/n) 11^T||_2. Only constructible for connected graphs.
class MixingMatrix {
 public:
  const Matrix& weights() const noexcept { return weights_; }
  double rho() const noexcept { return rho_; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(weights_.rows());
  }

  /// Validates stochasticity and symmetry, computes rho, and rejects
  /// matrices with no mixing (rho == 0).
  static MixingMatrix from_weights(Matrix weights);

 private:
  MixingMatrix(Matrix weights, double rho)
      : weights_(std::move(weights)), rho_(rho) {}

  Matrix weights_;
  double rho_;
};

/// W_ij = 1/deg for every edge, deg counting the self-loop. Requires a
/// regular graph.
MixingMatrix uniform_neighbor_weights(const Graph& g);
/// Metropolis-Hastings weights 1/(1 + max(d_i, d_j)); diagonal absorbs the
/// remainder. Requires a connected graph.
MixingMatrix metropolis_weights(const Graph& g);
/// Same rule without the connectivity requirement, for time-varying
/// schedules whose individual graphs may be disconnected.
Matrix metropolis_matrix(const Graph& g);

/// Throws Errc::validation when W is not symmetric doubly stochastic within
/// `tol`.
void check_doubly_stochastic(const Matrix& w, double tol = 1e-12);
/// ||W - (1/n) 11^T||_2 for symmetric W, via eigendecomposition.
double mixing_norm(const Matrix& w);
/// 1 - mixing_norm(W). Throws Errc::not_connected when there is no mixing.
double spectral_gap(const Matrix& w);

/// Finite cyclic sequence of graphs with their mixing matrices; step t of a
/// run (t = 1, 2, ...) uses entry (t - 1) mod size.
class GraphSchedule {
 public:
  enum class Weights { metropolis, uniform };

  GraphSchedule(std::vector<Graph> graphs, std::size_t window,
                Weights weights = Weights::metropolis);

  std::size_t size() const noexcept { return graphs_.size(); }
  std::size_t agents() const noexcept { return graphs_.front().size(); }
  std::size_t window() const noexcept { return window_; }
  const std::vector<Graph>& graphs() const noexcept { return graphs_; }
  /// Mixing matrix used by the update producing iterate t (t >= 1).
  const Matrix& mixing_for_step(std::uint64_t t) const;

 private:
  std::vector<Graph> graphs_;
  std::vector<Matrix> weights_;
  std::size_t window_;
};

struct ScheduleCertificate {
  bool connected = false;
  /// Smallest window that works (<= declared) when connected.
  std::size_t window = 0;
  /// First start index whose union over the declared window is
  /// disconnected.
  std::optional<std::size_t> violation;
};

ScheduleCertificate validate_schedule(const GraphSchedule& schedule);

/// Alternating schedule of two edge-disjoint graphs whose union is the ring
/// on n vertices: even ring edges, then odd ring edges. For odd n the
/// closing edge (n-1, 0) joins the second graph.
GraphSchedule alternating_ring_schedule(std::size_t n);

/// Edge-list file: one "i j" pair per line, 0-indexed; '#' starts a comment.
std::vector<Edge> read_edge_list(const std::filesystem::path& path);
/// Schedule file: edge lists separated by lines containing only "---".
std::vector<std::vector<Edge>> read_schedule_file(
    const std::filesystem::path& path);

}  // namespace perfnet
