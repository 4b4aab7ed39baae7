#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "stam/error.hpp"
#include "stam/gmrf.hpp"
#include "stam/graph.hpp"

using namespace stam;

namespace {

MatrixXd dense(const SparseMatrix& m) { return MatrixXd(m); }

int numerical_rank(const MatrixXd& m, double tol = 1e-9) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  int r = 0;
  for (Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (std::abs(eig.eigenvalues()(i)) > tol * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) ++r;
  return r;
}

int matrix_rank(const MatrixXd& a) {
  Eigen::FullPivLU<MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  return static_cast<int>(lu.rank());
}

// Kronecker product written out densely, independent of the sparse routine
MatrixXd dense_kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// E[x | Ax = 0] for a Gaussian with mean x and covariance Q^-1, from the
// dense covariance formula
VectorXd conditional_mean_oracle(const MatrixXd& q, const MatrixXd& a, const VectorXd& x) {
  const MatrixXd sigma = q.inverse();
  return x - sigma * a.transpose() * (a * sigma * a.transpose()).inverse() * (a * x);
}

}  // namespace

TEST_CASE("rw1_structure: the n = 7 random-walk matrix") {
  MatrixXd expect = MatrixXd::Zero(7, 7);
  for (int i = 0; i < 7; ++i) {
    expect(i, i) = (i == 0 || i == 6) ? 1 : 2;
    if (i + 1 < 7) expect(i, i + 1) = expect(i + 1, i) = -1;
  }
  const StructureMatrix r = rw1_structure(7);
  CHECK((dense(r.entries) - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.rank_deficiency == 1);
}

TEST_CASE("rw1_structure: n = 2 and n = 5") {
  MatrixXd two(2, 2);
  two << 1, -1, -1, 1;
  CHECK(dense(rw1_structure(2).entries) == two);
  const MatrixXd five = dense(rw1_structure(5).entries);
  CHECK(numerical_rank(five) == 4);
  CHECK((five * VectorXd::Ones(5)).norm() == 0.0);
  CHECK_THROWS_AS(rw1_structure(1), Error);
}

TEST_CASE("identity_structure") {
  CHECK(dense(identity_structure(1).entries)(0, 0) == 1.0);
  CHECK(dense(identity_structure(4).entries) == MatrixXd::Identity(4, 4));
  CHECK(identity_structure(9).rank_deficiency == 0);
}

TEST_CASE("leroux_precision") {
  const StructureMatrix path = icar_structure(path_graph(3));
  const StructureMatrix four = icar_structure(grid_graph(2, 2));
  CHECK(dense(leroux_precision(four, 0.0, 3.0)) == 3.0 * MatrixXd::Identity(4, 4));
  CHECK(dense(leroux_precision(four, 1.0, 1.0)) == dense(four.entries));
  MatrixXd expect(3, 3);
  expect << 2, -1, 0, -1, 3, -1, 0, -1, 2;
  CHECK((dense(leroux_precision(path, 0.5, 2.0)) - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(leroux_precision(path, 1.5, 1.0), Error);
  CHECK_THROWS_AS(leroux_precision(path, 0.5, 0.0), Error);
}

TEST_CASE("leroux_precision eigenvalues are tau (lambda mu + 1 - lambda)") {
  const StructureMatrix r = icar_structure(grid_graph(5, 6));
  Eigen::SelfAdjointEigenSolver<MatrixXd> er(dense(r.entries));
  for (double lambda : {0.0, 0.3, 0.9, 1.0}) {
    const double tau = 2.5;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eq(dense(leroux_precision(r, lambda, tau)));
    const VectorXd expect = tau * (lambda * er.eigenvalues().array() + (1.0 - lambda));
    CHECK((eq.eigenvalues() - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("interaction_structure examples") {
  const StructureMatrix i2 = identity_structure(2), i3 = identity_structure(3);
  const StructureMatrix t1 = interaction_structure({InteractionWhich::SpaceTime, InteractionType::I}, i2, i3);
  CHECK(dense(t1.entries) == MatrixXd::Identity(6, 6));

  const StructureMatrix s2 = icar_structure(path_graph(2));
  const StructureMatrix t4 = interaction_structure({InteractionWhich::SpaceTime, InteractionType::IV}, s2,
                                                   rw1_structure(2));
  MatrixXd expect(4, 4);
  expect << 1, -1, -1, 1, -1, 1, 1, -1, -1, 1, 1, -1, 1, -1, -1, 1;
  CHECK(dense(t4.entries) == expect);
  CHECK(numerical_rank(expect) == 1);

  const StructureMatrix z2 = interaction_structure({InteractionWhich::SpaceAge, InteractionType::II},
                                                   identity_structure(3), rw1_structure(4));
  MatrixXd blocks = MatrixXd::Zero(12, 12);
  for (int b = 0; b < 3; ++b) blocks.block(4 * b, 4 * b, 4, 4) = dense(rw1_structure(4).entries);
  CHECK(dense(z2.entries) == blocks);
  CHECK(z2.rank_deficiency == 3);
}

TEST_CASE("interaction_structure rejects operands that do not match the type") {
  const StructureMatrix s = icar_structure(path_graph(3));
  CHECK_THROWS_AS(interaction_structure({InteractionWhich::SpaceTime, InteractionType::II}, s, rw1_structure(4)),
                  Error);
  CHECK_THROWS_AS(
      interaction_structure({InteractionWhich::SpaceTime, InteractionType::I}, identity_structure(3), rw1_structure(4)),
      Error);
}

TEST_CASE("rank_deficiency") {
  const int S = 5, T = 4, K = 6;
  CHECK(rank_deficiency({InteractionWhich::SpaceTime, InteractionType::I}, S, T, K) == 0);
  CHECK(rank_deficiency({InteractionWhich::SpaceTime, InteractionType::II}, S, T, K) == S);
  CHECK(rank_deficiency({InteractionWhich::SpaceTime, InteractionType::III}, S, T, K) == T);
  CHECK(rank_deficiency({InteractionWhich::SpaceTime, InteractionType::IV}, S, T, K) == S + T - 1);
  CHECK(rank_deficiency({InteractionWhich::TimeAge, InteractionType::IV}, S, 5, 8) == 12);
  // 40 - rank(R_gamma (x) R_delta) with K = 8, T = 5
  const MatrixXd k = dense_kron(dense(rw1_structure(8).entries), dense(rw1_structure(5).entries));
  CHECK(40 - numerical_rank(k) == 12);
  // two spatial components double the spatial null space
  CHECK(rank_deficiency({InteractionWhich::SpaceTime, InteractionType::IV}, S, T, K, 2) == 2 * T + S - 2);
}

TEST_CASE("kronecker matches a dense expansion") {
  const StructureMatrix a = icar_structure(grid_graph(2, 3));
  const StructureMatrix b = rw1_structure(4);
  const StructureMatrix k = kronecker(a, b);
  CHECK((dense(k.entries) - dense_kron(dense(a.entries), dense(b.entries))).cwiseAbs().maxCoeff() == 0.0);
  CHECK(k.dim() == 24);
}

TEST_CASE("constraint_set rows") {
  const std::vector<std::vector<int>> one = {{0, 1, 2}};
  ModelSpec spec = parse_spec("delta=rw1;gamma=-;z1=II;z2=-;z3=-");
  auto cs = constraint_set(spec, 3, 4, 2, one);
  const MatrixXd& z = cs.at("zeta1").rows;
  REQUIRE(z.rows() == 3);
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 12; ++c) CHECK(z(i, c) == (c / 4 == i ? 1.0 : 0.0));
  CHECK(cs.at("phi").rows == MatrixXd::Ones(1, 3));
  CHECK(cs.count("gamma") == 0);

  spec.zeta1 = InteractionType::IV;
  cs = constraint_set(spec, 3, 4, 2, one);
  CHECK(cs.at("zeta1").rows.rows() == 7);
  CHECK(matrix_rank(cs.at("zeta1").rows) == 6);
  CHECK(independent_rows(cs.at("zeta1").rows).rows() == 6);

  spec.zeta1 = InteractionType::I;
  cs = constraint_set(spec, 3, 4, 2, one);
  CHECK(cs.at("zeta1").rows == MatrixXd::Ones(1, 12));

  // one phi row per spatial component
  cs = constraint_set(spec, 3, 4, 2, {{0, 2}, {1}});
  CHECK(cs.at("phi").rows.rows() == 2);
}

TEST_CASE("constraint rows annihilate the Type IV null space and only it") {
  const int S = 4, T = 3;
  const MatrixXd r = dense_kron(dense(icar_structure(path_graph(S)).entries), dense(rw1_structure(T).entries));
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r);
  const MatrixXd null = eig.eigenvectors().leftCols(S + T - 1);
  CHECK((r * null).cwiseAbs().maxCoeff() < 1e-10);
  const ConstraintSet cs =
      interaction_constraints({InteractionWhich::SpaceTime, InteractionType::IV}, S, T, {{0, 1, 2, 3}});
  // A N has full column rank: no null-space direction satisfies every row
  CHECK(matrix_rank(cs.rows * null) == S + T - 1);
}

TEST_CASE("condition_on_constraints") {
  ConstraintSet ones;
  ones.rows = MatrixXd::Ones(1, 5);
  SparseMatrix id(5, 5);
  id.setIdentity();
  VectorXd x(5);
  x << 1, 2, 3, 4, 10;
  const VectorXd centred = condition_on_constraints(id, ones, x);
  CHECK((centred - (x.array() - 4.0).matrix()).norm() < 1e-14);
  CHECK((condition_on_constraints(id, ones, centred) - centred).norm() < 1e-14);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  VectorXd y(6);
  for (Index i = 0; i < 6; ++i) y(i) = n01(rng);
  SparseMatrix q(6, 6);
  for (int i = 0; i < 6; ++i) q.insert(i, i) = i + 1.0;
  ConstraintSet a;
  a.rows = MatrixXd::Ones(1, 6);
  const VectorXd got = condition_on_constraints(q, a, y);
  CHECK((got - conditional_mean_oracle(MatrixXd(q), a.rows, y)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(got.sum()) < 1e-12);
}

TEST_CASE("condition_on_constraints drops redundant rows and is idempotent") {
  const int S = 3, T = 4;
  const ConstraintSet cs =
      interaction_constraints({InteractionWhich::SpaceTime, InteractionType::IV}, S, T, {{0, 1, 2}});
  const StructureMatrix r = kronecker(icar_structure(path_graph(S)), rw1_structure(T));
  SparseMatrix id(12, 12);
  id.setIdentity();
  const SparseMatrix q = r.entries + 1e-8 * id;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  VectorXd x(12);
  for (Index i = 0; i < 12; ++i) x(i) = n01(rng);
  const VectorXd once = condition_on_constraints(q, cs, x);
  CHECK((cs.rows * once).cwiseAbs().maxCoeff() < 1e-8 * x.norm());
  CHECK((condition_on_constraints(q, cs, once) - once).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sample_gmrf: identity and diagonal precisions") {
  const Index n = 1000;
  SparseMatrix id(n, n);
  id.setIdentity();
  SparseLdlt ldlt;
  factorize_or_throw(ldlt, id);
  std::mt19937_64 rng(11);
  VectorXd sum = VectorXd::Zero(n), sq = VectorXd::Zero(n);
  const int m = 10000;
  for (int d = 0; d < m; ++d) {
    const VectorXd z = sample_gmrf(ldlt, rng);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  const VectorXd var = (sq - sum.cwiseProduct(sum) / m) / (m - 1);
  CHECK(var.minCoeff() >= 0.94);
  CHECK(var.maxCoeff() <= 1.06);

  SparseMatrix four(1, 1);
  four.insert(0, 0) = 4.0;
  double s = 0.0, s2 = 0.0;
  for (int d = 0; d < m; ++d) {
    const double z = sample_gmrf(four, static_cast<std::uint64_t>(d))(0);
    s += z;
    s2 += z * z;
  }
  const double sd = std::sqrt((s2 - s * s / m) / (m - 1));
  // standard error of a normal sd estimate is sd / sqrt(2 (m - 1))
  CHECK(std::abs(sd - 0.5) < 3.0 * 0.5 / std::sqrt(2.0 * (m - 1)));
}

TEST_CASE("sample_gmrf: Leroux covariance matches the dense inverse") {
  const SparseMatrix q = leroux_precision(icar_structure(path_graph(3)), 0.5, 2.0);
  const MatrixXd cov = MatrixXd(q).inverse();
  SparseLdlt ldlt;
  factorize_or_throw(ldlt, q);
  std::mt19937_64 rng(2024);
  MatrixXd acc = MatrixXd::Zero(3, 3);
  const int m = 100000;
  for (int d = 0; d < m; ++d) {
    const VectorXd z = sample_gmrf(ldlt, rng);
    acc += z * z.transpose();
  }
  CHECK((acc / m - cov).cwiseAbs().maxCoeff() < 2e-2);
}

TEST_CASE("sample_gmrf: seeded and failing") {
  const SparseMatrix q = leroux_precision(icar_structure(grid_graph(3, 3)), 0.4, 1.0);
  CHECK(sample_gmrf(q, 9) == sample_gmrf(q, 9));
  SparseMatrix bad(2, 2);
  bad.insert(0, 0) = 1.0;
  bad.insert(1, 1) = -1.0;
  try {
    sample_gmrf(bad, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
}
