#include "latent_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

namespace stam::detail {

namespace {

StructureMatrix main_structure(MainStructure s, Index n) {
  return s == MainStructure::Rw1 ? rw1_structure(n) : identity_structure(n);
}

StructureMatrix interaction_for(InteractionKind kind, const StructureMatrix& left_structured,
                                Index n_left, const StructureMatrix& right_structured,
                                Index n_right) {
  const auto [sl, sr] = structured_operands(kind);
  return interaction_structure(kind, sl ? left_structured : identity_structure(n_left),
                               sr ? right_structured : identity_structure(n_right));
}

}  // namespace

LatentModel::LatentModel(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                         const ModelSpec& spec)
    : layout_(spec, d.dims()), hyper_(spec) {
  validate(d);
  const Dims dims = d.dims();
  if (dims.n_cells() == 0) throw Error(ErrorKind::InvalidInput, "dataset has no cells");
  if (g.n_areas() != dims.S || g.area_ids != d.area_ids)
    throw Error(ErrorKind::InvalidInput, "dataset areas do not match the graph (align first)");
  check_expected(d, expected);
  if (!(expected.sum() > 0.0)) throw Error(ErrorKind::InvalidInput, "all expected counts are zero");

  observed_ = d.observed;
  expected_ = expected;
  log_expected_.resize(expected.size());
  log_fact_.resize(expected.size());
  for (Index c = 0; c < expected.size(); ++c) {
    log_expected_(c) = expected(c) > 0.0 ? std::log(expected(c)) : 0.0;
    log_fact_(c) = std::lgamma(observed_(c) + 1.0);
  }

  // cell incidence
  std::array<Index, 7> idx{};
  per_cell_ = layout_.cell_indices(0, 0, 0, idx);
  cell_vars_.resize(static_cast<std::size_t>(dims.n_cells() * per_cell_));
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        layout_.cell_indices(i, j, k, idx);
        std::copy_n(idx.begin(), per_cell_,
                    cell_vars_.begin() + dims.cell(i, j, k) * per_cell_);
      }

  // structure matrices of every block
  const auto components = connected_components(g);
  const StructureMatrix r_phi = icar_structure(g);
  const StructureMatrix r_delta = rw1_or_identity(dims.T);
  const StructureMatrix r_gamma = rw1_or_identity(dims.K);
  const auto cons = constraint_set(spec, dims.S, dims.T, dims.K, components);

  auto structure_of = [&](Block b) -> StructureMatrix {
    switch (b) {
      case Block::Phi: return r_phi;
      case Block::Delta: return main_structure(spec.delta, dims.T);
      case Block::Gamma: return main_structure(spec.gamma, dims.K);
      case Block::Zeta1:
        return interaction_for({InteractionWhich::SpaceTime, *spec.zeta1}, r_phi, dims.S,
                               r_delta, dims.T);
      case Block::Zeta2:
        return interaction_for({InteractionWhich::SpaceAge, *spec.zeta2}, r_phi, dims.S,
                               r_gamma, dims.K);
      case Block::Zeta3:
        return interaction_for({InteractionWhich::TimeAge, *spec.zeta3}, r_gamma, dims.K,
                               r_delta, dims.T);
      default: break;
    }
    throw Error(ErrorKind::InvalidSpecification, "block without a prior");
  };

  std::vector<MatrixXd> global_rows;
  Index n_rows = 0;
  for (const auto& s : layout_.blocks()) {
    if (s.block == Block::Alpha) continue;
    BlockInfo info;
    info.block = s.block;
    info.offset = s.offset;
    info.size = s.size;
    info.slot = static_cast<int>(
        std::find(hyper_.precisions.begin(), hyper_.precisions.end(), s.block) -
        hyper_.precisions.begin());
    const StructureMatrix r = structure_of(s.block);
    info.singular = s.block == Block::Phi || r.rank_deficiency > 0;
    info.all_rows = cons.at(block_name(s.block)).rows;
    info.constraints = independent_rows(info.all_rows);
    info.rank = static_cast<int>(s.size - info.constraints.rows());
    if (s.block == Block::Phi) info.rank = static_cast<int>(s.size) - static_cast<int>(components.size());

    std::map<std::pair<Index, Index>, PriorTerm> merged;
    for (Index col = 0; col < r.entries.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(r.entries, col); it; ++it) {
        if (it.row() < it.col()) continue;
        auto& t = merged[{it.row(), it.col()}];
        t.r += it.value();
      }
    if (info.singular)
      for (Index v = 0; v < s.size; ++v) merged[{v, v}].i += 1.0;
    for (auto& [rc, t] : merged) {
      t.row = s.offset + rc.first;
      t.col = s.offset + rc.second;
      t.slot = info.slot;
      terms_.push_back(t);
    }
    n_rows += info.constraints.rows();
    blocks_.push_back(std::move(info));
  }

  a_ = MatrixXd::Zero(n_rows, layout_.dim());
  Index row = 0;
  for (const auto& b : blocks_) {
    a_.block(row, b.offset, b.constraints.rows(), b.size) = b.constraints;
    row += b.constraints.rows();
    gram_.emplace_back(b.constraints * b.constraints.transpose());
  }

  // positive spectrum of the spatial structure for the Leroux determinant
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(MatrixXd(r_phi.entries), Eigen::EigenvaluesOnly);
  const VectorXd mu = eig.eigenvalues();  // ascending
  const Index c = static_cast<Index>(components.size());
  leroux_mu_ = mu.tail(mu.size() - c).cwiseMax(0.0);
}

StructureMatrix LatentModel::rw1_or_identity(Index n) {
  return n >= 2 ? rw1_structure(n) : identity_structure(n);
}

PriorCoefs LatentModel::coefs(const VectorXd& theta) const {
  if (theta.size() != hyper_.size())
    throw Error(ErrorKind::InvalidHyperparameter, "hyperparameter vector has the wrong length");
  PriorCoefs out;
  const std::size_t n = hyper_.precisions.size();
  out.a.assign(n, 0.0);
  out.c.assign(n, 0.0);
  out.tau.assign(n, 0.0);
  const double lt = theta(hyper_.lambda_index());
  out.lambda = 1.0 / (1.0 + std::exp(-lt));
  for (const auto& b : blocks_) {
    const double tau = std::exp(theta(b.slot));
    const auto s = static_cast<std::size_t>(b.slot);
    out.tau[s] = tau;
    if (b.block == Block::Phi) {
      out.a[s] = tau * out.lambda;
      out.c[s] = tau * (1.0 - out.lambda + kStructureJitter);
    } else {
      out.a[s] = tau;
      out.c[s] = b.singular ? tau * kStructureJitter : 0.0;
    }
  }
  return out;
}

double LatentModel::log_prior_normalizer(const PriorCoefs& c) const {
  double v = 0.0;
  for (const auto& b : blocks_) v += 0.5 * b.rank * std::log(c.tau[static_cast<std::size_t>(b.slot)]);
  const double lam = c.lambda;
  for (Index t = 0; t < leroux_mu_.size(); ++t) v += 0.5 * std::log(lam * leroux_mu_(t) + 1.0 - lam);
  return v;
}

VectorXd LatentModel::prior_apply(const PriorCoefs& c, const VectorXd& x) const {
  VectorXd y = VectorXd::Zero(x.size());
  for (const auto& t : terms_) {
    const auto s = static_cast<std::size_t>(t.slot);
    const double v = c.a[s] * t.r + c.c[s] * t.i;
    y(t.row) += v * x(t.col);
    if (t.row != t.col) y(t.col) += v * x(t.row);
  }
  return y;
}

VectorXd LatentModel::eta(const VectorXd& x) const {
  const Index n = n_cells();
  VectorXd out(n);
  for (Index c = 0; c < n; ++c) {
    const Index* v = cell_vars(c);
    double e = 0.0;
    for (int t = 0; t < per_cell_; ++t) e += x(v[t]);
    out(c) = e;
  }
  return out;
}

double LatentModel::loglik_cell(Index c, double eta) const {
  const double e = expected_(c);
  if (e <= 0.0) return 0.0;
  return observed_(c) * (log_expected_(c) + eta) - e * std::exp(eta) - log_fact_(c);
}

double LatentModel::loglik(const VectorXd& eta) const {
  double ll = 0.0;
  for (Index c = 0; c < eta.size(); ++c) ll += loglik_cell(c, eta(c));
  if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
  return ll;
}

double LatentModel::constraint_residual(const VectorXd& x) const {
  double worst = 0.0;
  for (const auto& b : blocks_) {
    if (b.all_rows.rows() == 0) continue;
    const VectorXd r = b.all_rows * x.segment(b.offset, b.size);
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

void LatentModel::project(VectorXd& x) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const MatrixXd& c = blocks_[b].constraints;
    if (c.rows() == 0) continue;
    auto seg = x.segment(blocks_[b].offset, blocks_[b].size);
    seg -= c.transpose() * gram_[b].solve(c * seg);
  }
}

VectorXd LatentModel::start() const {
  VectorXd x = VectorXd::Zero(dim());
  const double o = observed_.sum(), e = expected_.sum();
  x(0) = std::log((o + 0.5) / e);
  return x;
}

}  // namespace stam::detail
