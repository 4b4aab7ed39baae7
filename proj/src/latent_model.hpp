#pragma once

// Shared machinery of the Laplace engine and the MCMC sampler: cell-to-latent
// incidence, prior precision entries in a hyperparameter-free form, block
// constraints and the prior normalizing terms.

#include <vector>

#include "stam/dataset.hpp"
#include "stam/gmrf.hpp"
#include "stam/graph.hpp"
#include "stam/model.hpp"

namespace stam::detail {

/// Entry of the prior precision (lower triangle, flat indices). Its value
/// under hyperparameters theta is a[slot] * r + c[slot] * i.
struct PriorTerm {
  Index row;
  Index col;
  int slot;
  double r;
  double i;
};

struct BlockInfo {
  Block block;
  Index offset;
  Index size;
  int slot;          // position in HyperLayout::precisions
  bool singular;     // structure matrix has a null space
  int rank;          // size minus independent constraint rows
  MatrixXd constraints;  // independent rows, local indices
  MatrixXd all_rows;     // every declared constraint row, local indices
};

struct PriorCoefs {
  std::vector<double> a, c, tau;
  double lambda = 0.5;
};

class LatentModel {
 public:
  LatentModel(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
              const ModelSpec& spec);

  const LatentLayout& layout() const { return layout_; }
  const HyperLayout& hyper() const { return hyper_; }
  const Dims& dims() const { return layout_.dims(); }
  Index dim() const { return layout_.dim(); }
  Index n_cells() const { return dims().n_cells(); }
  int vars_per_cell() const { return per_cell_; }
  /// Flat latent indices of cell c, `vars_per_cell()` of them, alpha first.
  const Index* cell_vars(Index c) const { return &cell_vars_[static_cast<std::size_t>(c * per_cell_)]; }
  const VectorXd& observed() const { return observed_; }
  const VectorXd& expected() const { return expected_; }

  const std::vector<PriorTerm>& prior_terms() const { return terms_; }
  const std::vector<BlockInfo>& blocks() const { return blocks_; }
  /// Global independent constraint rows (m x dim).
  const MatrixXd& constraints() const { return a_; }

  PriorCoefs coefs(const VectorXd& theta) const;
  /// sum_b rank_b/2 log tau_b + 1/2 sum_{mu > 0} log(lambda mu + 1 - lambda).
  double log_prior_normalizer(const PriorCoefs& c) const;
  /// Q x with the jittered prior precision.
  VectorXd prior_apply(const PriorCoefs& c, const VectorXd& x) const;
  VectorXd eta(const VectorXd& x) const;
  /// Poisson log-likelihood of a predictor, constants included; -inf when a
  /// cell with E = 0 has positive mean or the predictor is not finite.
  double loglik(const VectorXd& eta) const;
  double loglik_cell(Index c, double eta) const;
  /// Max |row . x| over every declared constraint row.
  double constraint_residual(const VectorXd& x) const;
  /// Orthogonal projection of every constrained block onto its constraint
  /// subspace. Removes the rounding left by kriging with a badly
  /// conditioned precision; a no-op on exactly constrained input.
  void project(VectorXd& x) const;

  /// Starting point: alpha at the log overall SIR, everything else zero.
  VectorXd start() const;

 private:
  static StructureMatrix rw1_or_identity(Index n);

  LatentLayout layout_;
  HyperLayout hyper_;
  VectorXd observed_, expected_, log_expected_, log_fact_;
  int per_cell_ = 0;
  std::vector<Index> cell_vars_;
  std::vector<PriorTerm> terms_;
  std::vector<BlockInfo> blocks_;
  MatrixXd a_;
  std::vector<Eigen::LLT<MatrixXd>> gram_;  // per block, C C^T
  VectorXd leroux_mu_;  // positive eigenvalues of the spatial structure
};

}  // namespace stam::detail
