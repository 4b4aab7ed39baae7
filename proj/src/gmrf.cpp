#include "stam/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/QR>

namespace stam {

namespace {

bool is_identity(const StructureMatrix& r) {
  if (r.entries.rows() != r.entries.cols()) return false;
  for (Index c = 0; c < r.entries.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(r.entries, c); it; ++it) {
      const double expect = it.row() == it.col() ? 1.0 : 0.0;
      if (it.value() != expect) return false;
    }
  }
  // every diagonal entry must actually be stored
  return r.entries.diagonal().isOnes();
}

std::vector<std::vector<int>> single_group(Index n) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  return {all};
}

}  // namespace

SparseMatrix leroux_precision(const StructureMatrix& r, double lambda, double tau) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw Error(ErrorKind::InvalidHyperparameter, "leroux lambda outside [0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw Error(ErrorKind::InvalidHyperparameter, "leroux tau must be positive");
  SparseMatrix id(r.dim(), r.dim());
  id.setIdentity();
  SparseMatrix q = tau * (lambda * r.entries + (1.0 - lambda) * id);
  q.prune(0.0);
  return q;
}

StructureMatrix kronecker(const StructureMatrix& left, const StructureMatrix& right) {
  const Index nl = left.dim(), nr = right.dim();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(left.entries.nonZeros() * right.entries.nonZeros()));
  for (Index cl = 0; cl < left.entries.outerSize(); ++cl) {
    for (SparseMatrix::InnerIterator a(left.entries, cl); a; ++a) {
      for (Index cr = 0; cr < right.entries.outerSize(); ++cr) {
        for (SparseMatrix::InnerIterator b(right.entries, cr); b; ++b) {
          trips.emplace_back(a.row() * nr + b.row(), a.col() * nr + b.col(),
                             a.value() * b.value());
        }
      }
    }
  }
  StructureMatrix out;
  out.entries.resize(nl * nr, nl * nr);
  out.entries.setFromTriplets(trips.begin(), trips.end());
  const Index dl = left.rank_deficiency, dr = right.rank_deficiency;
  out.rank_deficiency = static_cast<int>(nl * dr + dl * nr - dl * dr);
  return out;
}

std::pair<bool, bool> structured_operands(InteractionKind kind) {
  switch (kind.type) {
    case InteractionType::I:
      return {false, false};
    case InteractionType::IV:
      return {true, true};
    case InteractionType::II:
      // time-age lists the age operand first: R_gamma (x) I_delta
      return kind.which == InteractionWhich::TimeAge ? std::pair{true, false}
                                                     : std::pair{false, true};
    case InteractionType::III:
      return kind.which == InteractionWhich::TimeAge ? std::pair{false, true}
                                                     : std::pair{true, false};
  }
  return {false, false};
}

StructureMatrix interaction_structure(InteractionKind kind, const StructureMatrix& left,
                                      const StructureMatrix& right) {
  const auto [want_left, want_right] = structured_operands(kind);
  auto check = [](const StructureMatrix& r, bool structured, const char* side) {
    const bool ok = structured ? r.rank_deficiency > 0 : is_identity(r);
    if (!ok)
      throw Error(ErrorKind::InvalidSpecification,
                  std::string(side) + " operand must be " +
                      (structured ? "a structured matrix" : "the identity") +
                      " for this interaction type");
  };
  check(left, want_left, "left");
  check(right, want_right, "right");
  return kronecker(left, right);
}

int rank_deficiency(InteractionKind kind, int S, int T, int K, int components) {
  int n_left = 0, n_right = 0, null_left = 0, null_right = 0;
  const auto [sl, sr] = structured_operands(kind);
  switch (kind.which) {
    case InteractionWhich::SpaceTime:
      n_left = S, n_right = T, null_left = sl ? components : 0, null_right = sr ? 1 : 0;
      break;
    case InteractionWhich::SpaceAge:
      n_left = S, n_right = K, null_left = sl ? components : 0, null_right = sr ? 1 : 0;
      break;
    case InteractionWhich::TimeAge:
      n_left = K, n_right = T, null_left = sl ? 1 : 0, null_right = sr ? 1 : 0;
      break;
  }
  return n_left * null_right + null_left * n_right - null_left * null_right;
}

ConstraintSet sum_to_zero(Index n, const std::vector<std::vector<int>>& groups) {
  ConstraintSet cs;
  cs.rows = MatrixXd::Zero(static_cast<Index>(groups.size()), n);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int v : groups[g]) cs.rows(static_cast<Index>(g), v) = 1.0;
  return cs;
}

ConstraintSet interaction_constraints(InteractionKind kind, Index n_left, Index n_right,
                                      const std::vector<std::vector<int>>& left_groups) {
  const auto [sl, sr] = structured_operands(kind);
  std::vector<VectorXd> rows;
  const Index dim = n_left * n_right;
  if (!sl && !sr) {
    rows.push_back(VectorXd::Ones(dim));
  }
  if (sr) {
    // one row per left cell, summing over the structured right operand
    for (Index l = 0; l < n_left; ++l) {
      VectorXd row = VectorXd::Zero(dim);
      row.segment(l * n_right, n_right).setOnes();
      rows.push_back(std::move(row));
    }
  }
  if (sl) {
    for (Index r = 0; r < n_right; ++r) {
      for (const auto& group : left_groups) {
        VectorXd row = VectorXd::Zero(dim);
        for (int l : group) row(l * n_right + r) = 1.0;
        rows.push_back(std::move(row));
      }
    }
  }
  ConstraintSet cs;
  cs.rows.resize(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) cs.rows.row(static_cast<Index>(i)) = rows[i];
  return cs;
}

std::map<std::string, ConstraintSet> constraint_set(
    const ModelSpec& spec, int S, int T, int K,
    const std::vector<std::vector<int>>& spatial_components) {
  validate(spec);
  std::map<std::string, ConstraintSet> out;
  out["phi"] = sum_to_zero(S, spatial_components);
  if (spec.has_delta()) out["delta"] = sum_to_zero(T, single_group(T));
  if (spec.has_gamma()) out["gamma"] = sum_to_zero(K, single_group(K));
  if (spec.zeta1)
    out["zeta1"] = interaction_constraints({InteractionWhich::SpaceTime, *spec.zeta1}, S, T,
                                           spatial_components);
  if (spec.zeta2)
    out["zeta2"] = interaction_constraints({InteractionWhich::SpaceAge, *spec.zeta2}, S, K,
                                           spatial_components);
  if (spec.zeta3)
    out["zeta3"] = interaction_constraints({InteractionWhich::TimeAge, *spec.zeta3}, K, T,
                                           single_group(K));
  return out;
}

MatrixXd independent_rows(const MatrixXd& a, double tol) {
  if (a.rows() == 0) return a;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a.transpose());
  qr.setThreshold(tol);
  const Index rank = qr.rank();
  std::vector<Index> keep;
  for (Index i = 0; i < rank; ++i) keep.push_back(qr.colsPermutation().indices()(i));
  std::sort(keep.begin(), keep.end());
  MatrixXd out(rank, a.cols());
  for (Index i = 0; i < rank; ++i) out.row(i) = a.row(keep[i]);
  return out;
}

void factorize_or_throw(SparseLdlt& ldlt, const SparseMatrix& q) {
  ldlt.compute(q);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw Error(ErrorKind::NotPositiveDefinite, "precision matrix is not positive definite");
}

ConstrainedGaussian::ConstrainedGaussian(const SparseMatrix& q, const MatrixXd& a) {
  factorize_or_throw(ldlt_, q);
  a_ = independent_rows(a);
  if (a_.rows() > 0) {
    v_ = ldlt_.solve(a_.transpose());
    s_llt_.compute(a_ * v_);
    if (s_llt_.info() != Eigen::Success)
      throw Error(ErrorKind::NotPositiveDefinite, "constraint covariance is singular");
  }
}

VectorXd ConstrainedGaussian::condition(const VectorXd& x) const {
  if (a_.rows() == 0) return x;
  return x - v_ * s_llt_.solve(a_ * x);
}

VectorXd ConstrainedGaussian::sample(std::mt19937_64& rng) const {
  return condition(sample_gmrf(ldlt_, rng));
}

double ConstrainedGaussian::log_det() const {
  return ldlt_.vectorD().array().log().sum();
}

double ConstrainedGaussian::restricted_log_det() const {
  double ld = log_det();
  if (a_.rows() > 0)
    ld += 2.0 * s_llt_.matrixLLT().diagonal().array().log().sum();
  return ld;
}

VectorXd condition_on_constraints(const SparseMatrix& q, const ConstraintSet& a,
                                  const VectorXd& x) {
  return ConstrainedGaussian(q, a.rows).condition(x);
}

VectorXd sample_gmrf(const SparseLdlt& factor, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  const Index n = factor.vectorD().size();
  VectorXd w(n);
  for (Index i = 0; i < n; ++i) w(i) = normal(rng);
  w.array() /= factor.vectorD().array().sqrt();
  VectorXd y = factor.matrixU().solve(w);
  return factor.permutationPinv() * y;
}

VectorXd sample_gmrf(const SparseMatrix& q, std::uint64_t seed) {
  SparseLdlt ldlt;
  factorize_or_throw(ldlt, q);
  std::mt19937_64 rng(seed);
  return sample_gmrf(ldlt, rng);
}

}  // namespace stam
