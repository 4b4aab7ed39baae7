#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "stam/error.hpp"
#include "stam/graph.hpp"

using namespace stam;

namespace {

MatrixXd dense(const StructureMatrix& r) { return MatrixXd(r.entries); }

int numerical_rank(const MatrixXd& m, double tol = 1e-9) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  int r = 0;
  for (Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (std::abs(eig.eigenvalues()(i)) > tol) ++r;
  return r;
}

// union-find component count, independent of the library traversal
int count_components(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : edges) parent[find(a)] = find(b);
  int c = 0;
  for (int i = 0; i < n; ++i) c += find(i) == i;
  return c;
}

}  // namespace

TEST_CASE("parse_adjacency: symmetric pair") {
  const SpatialGraph g = parse_adjacency("A: B\nB: A");
  CHECK(g.n_areas() == 2);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<int, int>{0, 1});
}

TEST_CASE("parse_adjacency: one-sided listing is symmetrized") {
  const SpatialGraph g = parse_adjacency("A: B\nB:\n");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<int, int>{0, 1});
}

TEST_CASE("parse_adjacency: comments, blank lines, file order") {
  const SpatialGraph g = parse_adjacency("# region\n\nzeta: alpha\nalpha: zeta mid\nmid:\n");
  CHECK(g.area_ids == std::vector<std::string>{"zeta", "alpha", "mid"});
  CHECK(g.edges.size() == 2);
  CHECK(g.index_of("mid") == 2);
  CHECK(g.index_of("nope") == -1);
}

TEST_CASE("parse_adjacency: errors name the line") {
  auto message = [](const char* text) {
    try {
      parse_adjacency(text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidInput);
      return std::string(e.what());
    }
    FAIL("expected an error");
    return std::string();
  };
  CHECK(message("A: A").find("line 1") != std::string::npos);
  CHECK(message("A: B\nB:\nC: Q").find("line 3") != std::string::npos);
  CHECK(message("A:\nB:\nA:").find("line 3") != std::string::npos);
}

TEST_CASE("format_adjacency round-trips") {
  const SpatialGraph g = grid_graph(3, 4);
  const SpatialGraph h = parse_adjacency(format_adjacency(g));
  CHECK(h.area_ids == g.area_ids);
  CHECK(h.edges == g.edges);
}

TEST_CASE("icar_structure: path of 3") {
  MatrixXd expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  const StructureMatrix r = icar_structure(path_graph(3));
  CHECK((dense(r) - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.rank_deficiency == 1);
}

TEST_CASE("icar_structure: isolated node") {
  const StructureMatrix r = icar_structure(make_graph({"solo"}, {}));
  CHECK(dense(r).rows() == 1);
  CHECK(dense(r)(0, 0) == 0.0);
  CHECK(r.rank_deficiency == 1);
}

TEST_CASE("icar_structure: 2x2 rook grid is a 4-cycle") {
  const MatrixXd r = dense(icar_structure(grid_graph(2, 2)));
  for (int i = 0; i < 4; ++i) CHECK(r(i, i) == 2.0);
  CHECK(r.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
  int minus_ones = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) minus_ones += r(i, j) == -1.0;
  CHECK(minus_ones == 4);
  // Laplacian spectrum of C4 is {0, 2, 2, 4}
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r);
  CHECK(eig.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eig.eigenvalues()(3) == doctest::Approx(4.0));
  CHECK(numerical_rank(r) == 3);
}

TEST_CASE("connected_components") {
  CHECK(connected_components(make_graph({"a", "b", "c"}, {})).size() == 3);
  CHECK(connected_components(path_graph(3)) == std::vector<std::vector<int>>{{0, 1, 2}});
  const auto two = connected_components(make_graph({"a", "b", "c", "d"}, {{0, 2}, {1, 3}}));
  CHECK(two == std::vector<std::vector<int>>{{0, 2}, {1, 3}});
}

TEST_CASE("icar_structure on random graphs: zero row sums, PSD, rank S - components") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int s = 2 + static_cast<int>(rng() % 19);
    std::vector<std::pair<int, int>> edges;
    std::bernoulli_distribution keep(2.0 / s);
    for (int a = 0; a < s; ++a)
      for (int b = a + 1; b < s; ++b)
        if (keep(rng)) edges.emplace_back(a, b);
    std::vector<std::string> ids;
    for (int i = 0; i < s; ++i) ids.push_back("a" + std::to_string(i));
    const SpatialGraph g = make_graph(ids, edges);
    const StructureMatrix r = icar_structure(g);
    const MatrixXd m = dense(r);
    CHECK(m.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    const int comps = count_components(s, edges);
    CHECK(numerical_rank(m) == s - comps);
    CHECK(r.rank_deficiency == comps);
    CHECK(static_cast<int>(connected_components(g).size()) == comps);
  }
}

TEST_CASE("grid_graph labels and degree") {
  const SpatialGraph g = grid_graph(10, 10);
  CHECK(g.n_areas() == 100);
  CHECK(g.area_ids[0] == "r0c0");
  CHECK(g.area_ids[11] == "r1c1");
  CHECK(g.edges.size() == 180u);
}
