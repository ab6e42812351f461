#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "oracles.hpp"
#include "perfnet/common.hpp"
#include "perfnet/topology.hpp"

using namespace perfnet;

namespace {

oracle::Mat to_mat(const Matrix& w) {
  oracle::Mat m(w.rows(), std::vector<double>(w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) m[i][j] = w(i, j);
  return m;
}

void check_stochastic(const Matrix& w) {
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
    CHECK(std::abs(w.col(i).sum() - 1.0) < 1e-12);
  }
  CHECK(w == w.transpose());
}

template <class F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::invariant;
}

}  // namespace

TEST_CASE("ring construction") {
  auto g25 = build_ring(25);
  CHECK(g25.size() == 25);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(g25.degree(i) + 1 == 3);
    CHECK(g25.has_edge(i, (i + 1) % 25));
  }
  CHECK(g25.connected());
  CHECK(g25.regular());

  auto g1 = build_ring(1);
  CHECK(g1.size() == 1);
  CHECK(g1.degree(0) == 0);

  auto g3 = build_ring(3);
  CHECK(g3.edges() == build_complete(3).edges());

  CHECK(error_code([] { build_ring(0); }) == Errc::invalid_size);
}

TEST_CASE("uniform neighbor weights") {
  auto w25 = uniform_neighbor_weights(build_ring(25));
  const Matrix& w = w25.weights();
  check_stochastic(w);
  for (Eigen::Index i = 0; i < 25; ++i)
    for (Eigen::Index j = 0; j < 25; ++j)
      if (w(i, j) != 0.0) CHECK(w(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const double expected = 1.0 - (1.0 + 2.0 * std::cos(2.0 * M_PI / 25.0)) / 3.0;
  CHECK(std::abs(w25.rho() - expected) < 1e-12);
  CHECK(std::abs(w25.rho() - oracle::ring_rho(25)) < 1e-12);
  CHECK(std::abs(w25.rho() - oracle::rho_by_jacobi(to_mat(w))) < 1e-10);

  auto w1 = uniform_neighbor_weights(build_ring(1));
  CHECK(w1.weights().rows() == 1);
  CHECK(w1.weights()(0, 0) == 1.0);

  auto w3 = uniform_neighbor_weights(build_ring(3));
  CHECK((w3.weights().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  CHECK(std::abs(w3.rho() - 1.0) < 1e-12);

  CHECK(error_code([] { uniform_neighbor_weights(build_star(4)); }) == Errc::not_regular);
}

TEST_CASE("metropolis weights") {
  // Star on three vertices centred at 0.
  auto star = metropolis_weights(build_star(3, 0));
  const Matrix& w = star.weights();
  check_stochastic(w);
  CHECK(w(0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(w(0, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(w(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(w(1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(w(2, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(w(1, 2) == 0.0);

  auto k2 = metropolis_weights(build_complete(2));
  CHECK((k2.weights().array() - 0.5).abs().maxCoeff() < 1e-15);

  auto ring = metropolis_weights(build_ring(25));
  CHECK((ring.weights() - uniform_neighbor_weights(build_ring(25)).weights())
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  std::vector<Edge> none;
  CHECK(error_code([&] { metropolis_weights(Graph(3, none)); }) == Errc::not_connected);
}

TEST_CASE("spectral gap edge cases") {
  Matrix j = Matrix::Constant(4, 4, 0.25);
  CHECK(std::abs(spectral_gap(j) - 1.0) < 1e-12);
  CHECK(error_code([] { MixingMatrix::from_weights(Matrix::Identity(2, 2)); }) ==
        Errc::not_connected);
  Matrix bad = Matrix::Identity(3, 3);
  bad(0, 0) = 0.9;
  CHECK(error_code([&] { MixingMatrix::from_weights(bad); }) == Errc::validation);
}

TEST_CASE("property: random connected graphs give valid mixing matrices") {
  std::uint64_t state = 12345;
  auto next = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return state >> 33;
  };
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + next() % 12;
    // Random spanning tree plus extra edges.
    std::vector<Edge> edges;
    for (std::size_t v = 1; v < n; ++v) edges.emplace_back(v, next() % v);
    for (int extra = 0; extra < 5; ++extra) edges.emplace_back(next() % n, next() % n);
    Graph g(n, edges);
    auto m = metropolis_weights(g);
    check_stochastic(m.weights());
    CHECK(m.rho() > 0.0);
    CHECK(m.rho() <= 1.0 + 1e-12);
    CHECK(std::abs(m.rho() - oracle::rho_by_jacobi(to_mat(m.weights()))) < 1e-9);

    // Relabelling the vertices leaves rho unchanged.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = n - 1; k > 0; --k) std::swap(perm[k], perm[next() % (k + 1)]);
    std::vector<Edge> relabelled;
    for (auto [a, b] : edges) relabelled.emplace_back(perm[a], perm[b]);
    CHECK(std::abs(metropolis_weights(Graph(n, relabelled)).rho() - m.rho()) < 1e-10);

    // Mixing preserves the column mean of any stacked state.
    Matrix theta = Matrix::Random(static_cast<Eigen::Index>(n), 3) * 100.0;
    Matrix mixed = m.weights() * theta;
    CHECK((mixed.colwise().mean() - theta.colwise().mean()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("schedule validation") {
  SUBCASE("static ring certifies window 1 for any declared window") {
    for (std::size_t b : {1u, 2u, 5u}) {
      GraphSchedule s({build_ring(6), build_ring(6)}, b);
      auto cert = validate_schedule(s);
      CHECK(cert.connected);
      CHECK(cert.window == 1);
    }
  }
  SUBCASE("alternating ring halves need window 2") {
    for (std::size_t n : {24u, 25u}) {
      auto s = alternating_ring_schedule(n);
      CHECK(s.size() == 2);
      // Union equals the ring, and each half alone is disconnected.
      std::vector<Edge> all;
      for (const auto& g : s.graphs()) {
        CHECK_FALSE(oracle::connected(n, g.edges()));
        for (auto e : g.edges()) all.push_back(e);
      }
      CHECK(oracle::connected(n, all));
      CHECK(Graph(n, all).edges() == build_ring(n).edges());
      auto cert = validate_schedule(s);
      CHECK(cert.connected);
      CHECK(cert.window == 2);
      for (std::uint64_t t = 1; t <= 4; ++t) check_stochastic(s.mixing_for_step(t));
    }
  }
  SUBCASE("isolated vertex everywhere") {
    std::vector<Edge> e1{{0, 1}, {1, 2}}, e2{{0, 2}};
    GraphSchedule s({Graph(4, e1), Graph(4, e2)}, 2);
    auto cert = validate_schedule(s);
    CHECK_FALSE(cert.connected);
    REQUIRE(cert.violation.has_value());
    CHECK(*cert.violation == 0);
  }
  SUBCASE("declared window too short") {
    auto s = alternating_ring_schedule(10);
    GraphSchedule short_window(s.graphs(), 1);
    CHECK_FALSE(validate_schedule(short_window).connected);
  }
}

TEST_CASE("edge list and schedule files") {
  const auto dir = std::filesystem::temp_directory_path() / "perfnet_topology_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "edges.txt");
    f << "# triangle\n0 1\n1 2\n\n2 0  # closing edge\n";
  }
  auto edges = read_edge_list(dir / "edges.txt");
  CHECK(Graph(3, edges).edges() == build_complete(3).edges());
  {
    std::ofstream f(dir / "sched.txt");
    f << "0 1\n2 3\n---\n1 2\n3 0\n";
  }
  auto blocks = read_schedule_file(dir / "sched.txt");
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0].size() == 2);
  CHECK(blocks[1].size() == 2);
  {
    std::ofstream f(dir / "bad.txt");
    f << "0 x\n";
  }
  CHECK_THROWS_AS(read_edge_list(dir / "bad.txt"), Error);
  std::filesystem::remove_all(dir);
}
