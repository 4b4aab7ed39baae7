#pragma once

#include <vector>

#include "stam/types.hpp"

namespace stam {

/// Posterior summary in the layout mean, sd, 0.025, 0.25, 0.5, 0.75, 0.975, mode.
struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double q975 = 0.0;
  double mode = 0.0;
};

/// Quantile by linear interpolation of order statistics at h = (n-1)p.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Half-sample mode of sorted values.
double half_sample_mode(const std::vector<double>& sorted);

SummaryStats summarize(std::vector<double> draws);

/// Column-wise summaries of an M x d draw matrix (M >= 10).
std::vector<SummaryStats> posterior_summary(const MatrixXd& draws);

struct WaicResult {
  double waic = 0.0;
  double p_eff = 0.0;
  double lppd = 0.0;
};

/// Contribution of one cell: log mean exp of its draws and their variance.
struct WaicTerm {
  double lppd = 0.0;
  double var = 0.0;
};
WaicTerm waic_term(const VectorXd& ll_draws);

/// lppd = sum_c log mean_m exp(ll_mc), p_eff = sum_c var_m(ll_mc) with the
/// M-1 denominator, waic = -2 (lppd - p_eff). Rows are draws.
WaicResult waic(const MatrixXd& pointwise_loglik_draws);

}  // namespace stam
