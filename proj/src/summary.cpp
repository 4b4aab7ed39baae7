#include "stam/summary.hpp"

#include <algorithm>
#include <cmath>

#include "stam/error.hpp"

namespace stam {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::InsufficientDraws, "quantile of no draws");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double half_sample_mode(const std::vector<double>& sorted) {
  if (sorted.empty()) throw Error(ErrorKind::InsufficientDraws, "mode of no draws");
  std::size_t lo = 0, n = sorted.size();
  while (n > 3) {
    const std::size_t h = (n + 1) / 2;
    std::size_t best = lo;
    double width = sorted[lo + h - 1] - sorted[lo];
    for (std::size_t i = lo + 1; i + h <= lo + n; ++i) {
      const double w = sorted[i + h - 1] - sorted[i];
      if (w < width) {
        width = w;
        best = i;
      }
    }
    lo = best;
    n = h;
  }
  if (n == 3) {
    const double left = sorted[lo + 1] - sorted[lo];
    const double right = sorted[lo + 2] - sorted[lo + 1];
    if (left < right) return 0.5 * (sorted[lo] + sorted[lo + 1]);
    if (right < left) return 0.5 * (sorted[lo + 1] + sorted[lo + 2]);
    return sorted[lo + 1];
  }
  if (n == 2) return 0.5 * (sorted[lo] + sorted[lo + 1]);
  return sorted[lo];
}

SummaryStats summarize(std::vector<double> draws) {
  if (draws.size() < 2) throw Error(ErrorKind::InsufficientDraws, "summary needs >= 2 draws");
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : draws) ss += (v - mean) * (v - mean);
  SummaryStats s;
  s.mean = mean;
  s.sd = std::sqrt(ss / (n - 1.0));
  s.q025 = quantile_sorted(draws, 0.025);
  s.q25 = quantile_sorted(draws, 0.25);
  s.q50 = quantile_sorted(draws, 0.5);
  s.q75 = quantile_sorted(draws, 0.75);
  s.q975 = quantile_sorted(draws, 0.975);
  s.mode = half_sample_mode(draws);
  // constant draws: keep every summary exactly equal to the constant
  if (draws.front() == draws.back()) {
    s.mean = draws.front();
    s.sd = 0.0;
  }
  return s;
}

std::vector<SummaryStats> posterior_summary(const MatrixXd& draws) {
  if (draws.rows() < 10)
    throw Error(ErrorKind::InsufficientDraws, "posterior summary needs at least 10 draws");
  std::vector<SummaryStats> out;
  out.reserve(static_cast<std::size_t>(draws.cols()));
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Index c = 0; c < draws.cols(); ++c) {
    for (Index m = 0; m < draws.rows(); ++m) col[static_cast<std::size_t>(m)] = draws(m, c);
    out.push_back(summarize(col));
  }
  return out;
}

WaicTerm waic_term(const VectorXd& ll) {
  const Index m = ll.size();
  if (m < 2) throw Error(ErrorKind::InsufficientDraws, "WAIC needs at least 2 draws");
  const double mx = ll.maxCoeff();
  WaicTerm t;
  if (!std::isfinite(mx)) {
    t.lppd = mx;
    t.var = 0.0;
    return t;
  }
  t.lppd = mx + std::log((ll.array() - mx).exp().sum() / static_cast<double>(m));
  const double mean = ll.mean();
  t.var = (ll.array() - mean).square().sum() / static_cast<double>(m - 1);
  return t;
}

WaicResult waic(const MatrixXd& ll) {
  if (ll.rows() < 2) throw Error(ErrorKind::InsufficientDraws, "WAIC needs at least 2 draws");
  WaicResult r;
  for (Index c = 0; c < ll.cols(); ++c) {
    const WaicTerm t = waic_term(ll.col(c));
    r.lppd += t.lppd;
    r.p_eff += t.var;
  }
  r.waic = -2.0 * (r.lppd - r.p_eff);
  return r;
}

}  // namespace stam
