#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "stam/error.hpp"
#include "stam/model_spec.hpp"
#include "stam/types.hpp"

namespace stam {

/// Diagonal load added to singular structure matrices (before scaling by the
/// precision) whenever they must be factorized.
inline constexpr double kStructureJitter = 1e-8;

template <typename Scalar = double>
BasicStructureMatrix<Scalar> rw1_structure(Index n);

template <typename Scalar = double>
BasicStructureMatrix<Scalar> identity_structure(Index n);

/// tau * (lambda * R + (1 - lambda) * I).
SparseMatrix leroux_precision(const StructureMatrix& r, double lambda, double tau);

/// Kronecker product; the rank deficiency follows from the operands'
/// null-space dimensions.
StructureMatrix kronecker(const StructureMatrix& left, const StructureMatrix& right);

/// R_zeta for one interaction. Operands must be in the order of the
/// interaction table: spatial (x) temporal for space-time, spatial (x) age
/// for space-age, age (x) temporal for time-age; identity vs structured
/// operands must match the type.
StructureMatrix interaction_structure(InteractionKind kind,
                                      const StructureMatrix& left,
                                      const StructureMatrix& right);

/// Which operand of `kind` is structured: {left, right}.
std::pair<bool, bool> structured_operands(InteractionKind kind);

/// Null-space dimension of the interaction structure. `components` is the
/// number of connected components of the spatial graph.
int rank_deficiency(InteractionKind kind, int S, int T, int K, int components = 1);

/// Linear constraints A x = 0 on one latent block.
struct ConstraintSet {
  MatrixXd rows;

  Index n_rows() const { return rows.rows(); }
  VectorXd rhs() const { return VectorXd::Zero(rows.rows()); }
};

/// One sum-to-zero row per group (groups partition [0, n)).
ConstraintSet sum_to_zero(Index n, const std::vector<std::vector<int>>& groups);

/// Constraint rows of an interaction block with operand sizes n_left x
/// n_right (index = l * n_right + r). `left_groups` partitions the left
/// operand into components (a single group unless it is spatial).
ConstraintSet interaction_constraints(InteractionKind kind, Index n_left,
                                      Index n_right,
                                      const std::vector<std::vector<int>>& left_groups);

/// Constraints of every latent block present in `spec`, keyed by block name
/// ("phi", "delta", "gamma", "zeta1", "zeta2", "zeta3").
std::map<std::string, ConstraintSet> constraint_set(
    const ModelSpec& spec, int S, int T, int K,
    const std::vector<std::vector<int>>& spatial_components);

/// Linearly independent subset of the rows of `a` (rank-revealing QR).
MatrixXd independent_rows(const MatrixXd& a, double tol = 1e-10);

using SparseLdlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower,
                                         Eigen::AMDOrdering<int>>;

/// Factorized precision Q together with the kriging quantities for a
/// constraint matrix A: V = Q^-1 A^T and (A V)^-1.
class ConstrainedGaussian {
 public:
  ConstrainedGaussian(const SparseMatrix& q, const MatrixXd& a);

  /// x - Q^-1 A^T (A Q^-1 A^T)^-1 A x.
  VectorXd condition(const VectorXd& x) const;
  /// Draw from N(0, Q^-1) conditioned on A x = 0.
  VectorXd sample(std::mt19937_64& rng) const;
  VectorXd solve(const VectorXd& b) const { return ldlt_.solve(b); }

  /// log|Q| + log|A Q^-1 A^T|; equals the log-determinant of Q restricted to
  /// the null space of A, up to the constant log|A A^T|.
  double restricted_log_det() const;
  double log_det() const;
  const MatrixXd& constraints() const { return a_; }

 private:
  SparseLdlt ldlt_;
  MatrixXd a_;
  MatrixXd v_;
  Eigen::LLT<MatrixXd> s_llt_;
};

VectorXd condition_on_constraints(const SparseMatrix& q, const ConstraintSet& a,
                                  const VectorXd& x);

/// z ~ N(0, Q^-1) via sparse factorization; deterministic in the seed.
VectorXd sample_gmrf(const SparseMatrix& q, std::uint64_t seed);
VectorXd sample_gmrf(const SparseLdlt& factor, std::mt19937_64& rng);

/// Factorizes and throws NotPositiveDefinite on a non-positive pivot.
void factorize_or_throw(SparseLdlt& ldlt, const SparseMatrix& q);

// ---------------------------------------------------------------------------

template <typename Scalar>
BasicStructureMatrix<Scalar> rw1_structure(Index n) {
  if (n < 2) throw Error(ErrorKind::InvalidDimension, "rw1_structure needs n >= 2");
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(3 * n);
  for (Index i = 0; i < n; ++i) {
    const Scalar d = (i == 0 || i == n - 1) ? Scalar(1) : Scalar(2);
    trips.emplace_back(i, i, d);
    if (i + 1 < n) {
      trips.emplace_back(i, i + 1, Scalar(-1));
      trips.emplace_back(i + 1, i, Scalar(-1));
    }
  }
  BasicStructureMatrix<Scalar> r;
  r.entries.resize(n, n);
  r.entries.setFromTriplets(trips.begin(), trips.end());
  r.rank_deficiency = 1;
  return r;
}

template <typename Scalar>
BasicStructureMatrix<Scalar> identity_structure(Index n) {
  if (n < 1) throw Error(ErrorKind::InvalidDimension, "identity_structure needs n >= 1");
  BasicStructureMatrix<Scalar> r;
  r.entries.resize(n, n);
  r.entries.setIdentity();
  r.rank_deficiency = 0;
  return r;
}

}  // namespace stam
