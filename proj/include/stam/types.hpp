#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace stam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Sparse symmetric positive semi-definite prior structure with a declared
/// rank deficiency (the dimension of its null space).
template <typename Scalar>
struct BasicStructureMatrix {
  Eigen::SparseMatrix<Scalar> entries;
  int rank_deficiency = 0;

  Index dim() const { return entries.rows(); }
};

using StructureMatrix = BasicStructureMatrix<double>;

}  // namespace stam
