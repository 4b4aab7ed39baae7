#include "fit_common.hpp"

#include <algorithm>
#include <cmath>

namespace stam::detail {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void summarize_draws(const LatentModel& model, const Dataset& d, const MatrixXd& latent,
                     const MatrixXd& theta, FitResult& out) {
  const Index m = latent.rows();
  if (m < 10) throw Error(ErrorKind::InsufficientDraws, "need at least 10 posterior draws");
  out.spec = model.layout().spec();
  out.area_ids = d.area_ids;
  out.period_labels = d.period_labels;
  out.age_labels = d.age_labels;

  std::vector<double> col(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) col[static_cast<std::size_t>(r)] = latent(r, 0);
  out.alpha = summarize(col);

  const HyperLayout& hl = model.hyper();
  const auto names = hl.names();
  out.hyper_summary.clear();
  for (Index p = 0; p < hl.size(); ++p) {
    for (Index r = 0; r < theta.rows(); ++r) {
      const double v = theta(r, p);
      col[static_cast<std::size_t>(r)] = p == hl.lambda_index() ? logistic(v) : std::exp(-0.5 * v);
    }
    col.resize(static_cast<std::size_t>(theta.rows()));
    out.hyper_summary.push_back({names[static_cast<std::size_t>(p)], summarize(col)});
    col.resize(static_cast<std::size_t>(m));
  }

  out.latent_summary.clear();
  const VectorXd mean = latent.colwise().mean();
  const VectorXd sd =
      ((latent.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(m - 1))
          .cwiseSqrt()
          .transpose();
  for (const auto& s : model.layout().blocks())
    out.latent_summary.push_back({s.block, mean.segment(s.offset, s.size), sd.segment(s.offset, s.size)});

  // pointwise log-likelihood over draws, one cell at a time
  WaicResult w;
  VectorXd eta(m), ll(m);
  const int nv = model.vars_per_cell();
  for (Index c = 0; c < model.n_cells(); ++c) {
    if (model.expected()(c) <= 0.0) continue;
    const Index* v = model.cell_vars(c);
    eta = latent.col(v[0]);
    for (int t = 1; t < nv; ++t) eta += latent.col(v[t]);
    for (Index r = 0; r < m; ++r) ll(r) = model.loglik_cell(c, eta(r));
    const WaicTerm term = waic_term(ll);
    w.lppd += term.lppd;
    w.p_eff += term.var;
  }
  out.lppd = w.lppd;
  out.p_eff = w.p_eff;
  out.waic = -2.0 * (w.lppd - w.p_eff);

  double resid = 0.0;
  for (Index r = 0; r < m; ++r)
    resid = std::max(resid, model.constraint_residual(latent.row(r).transpose()));
  out.diagnostics.constraint_residual = std::max(out.diagnostics.constraint_residual, resid);
}

}  // namespace stam::detail
