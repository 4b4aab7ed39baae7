#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "fit_common.hpp"
#include "latent_model.hpp"
#include "stam/inference.hpp"

namespace stam {

namespace {

using detail::LatentModel;
using detail::PriorCoefs;

constexpr double kEtaGuard = 30.0;
constexpr int kMaxHalvings = 20;
constexpr double kLogTauMin = -12.0, kLogTauMax = 25.0, kLogitMax = 12.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ModePoint {
  VectorXd x;
  bool converged = false;
  int iterations = 0;
  double max_gradient = 0.0;
  double log_marginal = kNegInf;
};

// Newton iterations for the constrained latent mode on a fixed Hessian
// sparsity pattern: the symbolic analysis is done once per engine.
class LaplaceEngine {
 public:
  LaplaceEngine(const LatentModel& m, PriorFamily prior, int max_iter, double tol)
      : m_(m), prior_(prior), max_iter_(max_iter), tol_(tol) {
    build_pattern();
    pin_alpha(false);
  }

  /// Adds (or drops) the row fixing alpha at its starting value, so that
  /// `evaluate` profiles the remaining latent field for a given alpha.
  void pin_alpha(bool on) {
    const MatrixXd& base = m_.constraints();
    a_.resize(base.rows() + (on ? 1 : 0), m_.dim());
    a_.topRows(base.rows()) = base;
    if (on) {
      a_.bottomRows(1).setZero();
      a_(base.rows(), 0) = 1.0;
    }
    aat_.compute(a_ * a_.transpose());
    pinned_ = on;
  }

  /// Conditional variance of alpha in the current approximation.
  double alpha_variance() const {
    VectorXd e = VectorXd::Zero(m_.dim());
    e(0) = 1.0;
    return krige(ldlt_.solve(e))(0);
  }

  /// Mode and Laplace log marginal at theta; the factorization of the
  /// negative Hessian at the returned mode stays loaded for `draw`.
  ModePoint evaluate(const VectorXd& theta, const VectorXd& x0) {
    coefs_ = m_.coefs(theta);
    ModePoint out;
    VectorXd x = x0;
    VectorXd eta = m_.eta(x);
    if (eta.cwiseAbs().maxCoeff() > kEtaGuard) {
      x = m_.start();
      if (pinned_) x(0) = x0(0);
      eta = m_.eta(x);
    }
    double f = objective(x, eta);
    const MatrixXd& a = a_;
    int it = 0;
    for (;;) {
      const VectorXd w = (m_.expected().array() * eta.array().exp()).matrix();
      if (!factorize(w)) return out;
      VectorXd g = -m_.prior_apply(coefs_, x);
      accumulate_residual(w, g);
      VectorXd pg = g;
      if (a.rows() > 0) pg -= a.transpose() * aat_.solve(a * g);
      out.max_gradient = pg.cwiseAbs().maxCoeff();
      if (out.max_gradient <= tol_) {
        out.converged = true;
        break;
      }
      if (it >= max_iter_) break;
      const VectorXd step = krige(ldlt_.solve(g));
      const double decrement = g.dot(step);
      if (decrement < 1e-18 * (1.0 + std::abs(f))) {
        out.converged = true;  // at the rounding floor
        break;
      }
      const VectorXd eta_step = m_.eta(step);
      double t = 1.0;
      bool accepted = false;
      for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
        const VectorXd eta_new = eta + t * eta_step;
        if (!(eta_new.cwiseAbs().maxCoeff() <= kEtaGuard)) continue;
        VectorXd x_new = x + t * step;
        m_.project(x_new);
        const double f_new = objective(x_new, eta_new);
        if (f_new >= f - 1e-12 * (1.0 + std::abs(f))) {
          x = x_new;
          eta = eta_new;
          f = f_new;
          accepted = true;
          break;
        }
      }
      ++it;
      if (!accepted) {
        // no progress possible: refresh the factorization at x and stop
        const VectorXd w2 = (m_.expected().array() * eta.array().exp()).matrix();
        if (!factorize(w2)) return out;
        break;
      }
    }
    out.x = x;
    out.iterations = it;
    const double ldh = ldlt_.vectorD().array().log().sum() +
                       (a.rows() > 0 ? 2.0 * s_llt_.matrixLLT().diagonal().array().log().sum() : 0.0);
    const double lp = log_hyperprior(m_.hyper().from_internal(theta), prior_);
    out.log_marginal = lp + m_.log_prior_normalizer(coefs_) + f - 0.5 * ldh;
    if (!std::isfinite(out.log_marginal)) out.log_marginal = kNegInf;
    return out;
  }

  /// Draw from the constrained Gaussian approximation at `mode`.
  VectorXd draw(const VectorXd& mode, std::mt19937_64& rng) const {
    VectorXd z = krige(sample_gmrf(ldlt_, rng));
    z = krige(z);
    VectorXd x = mode + z;
    m_.project(x);
    return x;
  }

 private:
  double objective(const VectorXd& x, const VectorXd& eta) const {
    return m_.loglik(eta) - 0.5 * x.dot(m_.prior_apply(coefs_, x));
  }

  void accumulate_residual(const VectorXd& w, VectorXd& g) const {
    const int nv = m_.vars_per_cell();
    for (Index c = 0; c < m_.n_cells(); ++c) {
      const double r = m_.observed()(c) - w(c);
      const Index* v = m_.cell_vars(c);
      for (int t = 0; t < nv; ++t) g(v[t]) += r;
    }
  }

  VectorXd krige(const VectorXd& x) const {
    if (a_.rows() == 0) return x;
    return x - v_ * s_llt_.solve(a_ * x);
  }

  bool factorize(const VectorXd& w) {
    double* vals = h_.valuePtr();
    std::fill(vals, vals + h_.nonZeros(), 0.0);
    const auto& terms = m_.prior_terms();
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto s = static_cast<std::size_t>(terms[t].slot);
      vals[term_pos_[t]] += coefs_.a[s] * terms[t].r + coefs_.c[s] * terms[t].i;
    }
    const Index n = m_.n_cells();
    const std::size_t np = pairs_per_cell_;
    for (Index c = 0; c < n; ++c) {
      const double wc = w(c);
      const int* p = &cell_pos_[static_cast<std::size_t>(c) * np];
      for (std::size_t q = 0; q < np; ++q) vals[p[q]] += wc;
    }
    ldlt_.factorize(h_);
    if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0.0)) return false;
    const MatrixXd& a = a_;
    if (a.rows() > 0) {
      v_ = ldlt_.solve(MatrixXd(a.transpose()));
      s_llt_.compute(a * v_);
      if (s_llt_.info() != Eigen::Success) return false;
    }
    return true;
  }

  void build_pattern() {
    const Index d = m_.dim();
    std::vector<Triplet> trips;
    const int nv = m_.vars_per_cell();
    pairs_per_cell_ = static_cast<std::size_t>(nv * (nv + 1) / 2);
    for (const auto& t : m_.prior_terms()) trips.emplace_back(t.row, t.col, 0.0);
    for (Index c = 0; c < m_.n_cells(); ++c) {
      const Index* v = m_.cell_vars(c);
      for (int p = 0; p < nv; ++p)
        for (int q = 0; q <= p; ++q) trips.emplace_back(v[p], v[q], 0.0);
    }
    h_.resize(d, d);
    h_.setFromTriplets(trips.begin(), trips.end());
    h_.makeCompressed();
    auto pos = [&](Index row, Index col) {
      const int* begin = h_.innerIndexPtr() + h_.outerIndexPtr()[col];
      const int* end = h_.innerIndexPtr() + h_.outerIndexPtr()[col + 1];
      const int* it = std::lower_bound(begin, end, static_cast<int>(row));
      return static_cast<int>(it - h_.innerIndexPtr());
    };
    for (const auto& t : m_.prior_terms()) term_pos_.push_back(pos(t.row, t.col));
    cell_pos_.resize(static_cast<std::size_t>(m_.n_cells()) * pairs_per_cell_);
    std::size_t k = 0;
    for (Index c = 0; c < m_.n_cells(); ++c) {
      const Index* v = m_.cell_vars(c);
      for (int p = 0; p < nv; ++p)
        for (int q = 0; q <= p; ++q) cell_pos_[k++] = pos(v[p], v[q]);
    }
    ldlt_.analyzePattern(h_);
  }

  const LatentModel& m_;
  PriorFamily prior_;
  int max_iter_;
  double tol_;
  PriorCoefs coefs_;
  SparseMatrix h_;
  std::size_t pairs_per_cell_ = 0;
  std::vector<int> term_pos_;
  std::vector<int> cell_pos_;
  SparseLdlt ldlt_;
  bool pinned_ = false;
  MatrixXd a_;
  MatrixXd v_;
  Eigen::LLT<MatrixXd> s_llt_;
  Eigen::LLT<MatrixXd> aat_;
};

bool inside_box(const VectorXd& theta, Index lambda_index) {
  for (Index p = 0; p < theta.size(); ++p) {
    if (p == lambda_index) {
      if (std::abs(theta(p)) > kLogitMax) return false;
    } else if (theta(p) < kLogTauMin || theta(p) > kLogTauMax) {
      return false;
    }
  }
  return true;
}

struct OuterSearch {
  VectorXd theta;
  ModePoint mode;
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead ascent on the Laplace log marginal, warm-starting every inner
// solve from the best mode seen so far.
OuterSearch maximize_marginal(LaplaceEngine& engine, const LatentModel& model, int max_evals) {
  const Index p = model.hyper().size();
  const Index li = model.hyper().lambda_index();
  OuterSearch out;
  VectorXd warm = model.start();
  double best_f = kNegInf;
  VectorXd best_x = warm;

  auto eval = [&](const VectorXd& th) -> double {
    ++out.evaluations;
    if (!inside_box(th, li)) return kNegInf;
    ModePoint mp = engine.evaluate(th, best_x);
    if (!mp.converged || mp.x.size() == 0) return kNegInf;
    if (mp.log_marginal > best_f) {
      best_f = mp.log_marginal;
      best_x = mp.x;
    }
    return mp.log_marginal;
  };

  std::vector<VectorXd> simplex(static_cast<std::size_t>(p + 1), VectorXd::Zero(p));
  std::vector<double> f(static_cast<std::size_t>(p + 1));
  for (Index i = 0; i < p; ++i) simplex[static_cast<std::size_t>(i + 1)](i) = 1.0;
  for (std::size_t i = 0; i < simplex.size(); ++i) f[i] = eval(simplex[i]);

  std::vector<std::size_t> order(simplex.size());
  while (out.evaluations < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& v : simplex) size = std::max(size, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(f[worst]) && f[best] - f[worst] < 1e-6 && size < 1e-3) {
      out.converged = true;
      break;
    }
    VectorXd centroid = VectorXd::Zero(p);
    for (std::size_t i : order)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(p);
    const VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr > f[best]) {
      const VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(xe);
      if (fe > fr) {
        simplex[worst] = xe;
        f[worst] = fe;
      } else {
        simplex[worst] = xr;
        f[worst] = fr;
      }
      continue;
    }
    if (fr > f[second]) {
      simplex[worst] = xr;
      f[worst] = fr;
      continue;
    }
    const bool outside = fr > f[worst];
    const VectorXd xc = outside ? VectorXd(centroid + 0.5 * (xr - centroid))
                                : VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(xc);
    if (fc > (outside ? fr : f[worst])) {
      simplex[worst] = xc;
      f[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      f[i] = eval(simplex[i]);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f[i] > f[best]) best = i;
  if (!std::isfinite(f[best]))
    throw Error(ErrorKind::NonConvergence, "no hyperparameter value gave a converged latent mode");
  out.theta = simplex[best];
  out.mode = engine.evaluate(out.theta, best_x);
  return out;
}

// Curvature of the log marginal by central differences; returns the
// eigen-decomposition of the negative Hessian with eigenvalues floored.
struct Curvature {
  MatrixXd axes;    // columns
  VectorXd values;  // precision along each axis
};

Curvature marginal_curvature(LaplaceEngine& engine, const VectorXd& theta, const ModePoint& mode) {
  const Index p = theta.size();
  const double h = 0.1;
  const double f0 = mode.log_marginal;
  auto f = [&](const VectorXd& th) {
    const ModePoint mp = engine.evaluate(th, mode.x);
    return mp.converged ? mp.log_marginal : kNegInf;
  };
  MatrixXd hess(p, p);
  for (Index i = 0; i < p; ++i) {
    VectorXd a = theta, b = theta;
    a(i) += h;
    b(i) -= h;
    hess(i, i) = (f(a) - 2.0 * f0 + f(b)) / (h * h);
    for (Index j = 0; j < i; ++j) {
      VectorXd pp = theta, pm = theta, mp = theta, mm = theta;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      hess(i, j) = hess(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
    }
  }
  Curvature c;
  if (!hess.allFinite()) {
    c.axes = MatrixXd::Identity(p, p);
    c.values = VectorXd::Constant(p, 0.25);
    return c;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(-hess);
  c.axes = eig.eigenvectors();
  c.values = eig.eigenvalues().cwiseMax(0.25);
  return c;
}

// Laplace approximation of the marginal of alpha: the rest of the field is
// re-optimized with alpha pinned on a grid around the joint mode, and the
// log-determinant change enters the density. Returns mean and sd together
// with the Gaussian values they replace.
struct AlphaMarginal {
  double mean = 0.0, sd = 0.0, gauss_mean = 0.0, gauss_sd = 0.0;
  bool ok = false;
};

AlphaMarginal alpha_marginal(LaplaceEngine& engine, const VectorXd& theta, const ModePoint& star) {
  AlphaMarginal out;
  const ModePoint centre = engine.evaluate(theta, star.x);
  if (!centre.converged) return out;
  out.gauss_mean = centre.x(0);
  out.gauss_sd = std::sqrt(std::max(engine.alpha_variance(), 0.0));
  if (!(out.gauss_sd > 0.0)) return out;
  engine.pin_alpha(true);
  std::vector<double> at, lt;
  for (int t = -8; t <= 8; ++t) {
    VectorXd x0 = centre.x;
    x0(0) += 0.5 * t * out.gauss_sd;
    const ModePoint mp = engine.evaluate(theta, x0);
    if (!mp.converged || !std::isfinite(mp.log_marginal)) continue;
    at.push_back(x0(0));
    lt.push_back(mp.log_marginal);
  }
  engine.pin_alpha(false);
  if (at.size() < 9) return out;
  const double top = *std::max_element(lt.begin(), lt.end());
  double w = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double wi = std::exp(lt[i] - top);
    w += wi;
    m1 += wi * at[i];
  }
  out.mean = m1 / w;
  double m2 = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) m2 += std::exp(lt[i] - top) * (at[i] - out.mean) * (at[i] - out.mean);
  out.sd = std::sqrt(m2 / w);
  out.ok = std::isfinite(out.mean) && out.sd > 0.0;
  return out;
}

}  // namespace

const BlockSummary& FitResult::block(Block b) const {
  for (const auto& s : latent_summary)
    if (s.block == b) return s;
  throw Error(ErrorKind::SpecificationMismatch, "fit has no block '" + block_name(b) + "'");
}

bool FitResult::has_block(Block b) const {
  for (const auto& s : latent_summary)
    if (s.block == b) return true;
  return false;
}

FitResult fit_laplace(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                      const ModelSpec& spec, const FitOptions& opts) {
  if (opts.n_draws < 10) throw Error(ErrorKind::InsufficientDraws, "n_draws must be at least 10");
  const LatentModel model(d, expected, g, spec);
  LaplaceEngine engine(model, opts.prior, opts.max_newton_iterations, opts.gradient_tolerance);
  const Index p = model.hyper().size();

  FitResult out;
  out.prior = opts.prior;
  out.diagnostics.method = "laplace";

  struct Component {
    VectorXd theta;
    VectorXd x;
    double weight;
  };
  std::vector<Component> comps;
  Curvature curv;
  VectorXd theta_star;
  ModePoint star;

  if (opts.fixed_hyper) {
    validate(*opts.fixed_hyper);
    theta_star = model.hyper().to_internal(*opts.fixed_hyper);
    star = engine.evaluate(theta_star, model.start());
    out.diagnostics.outer_converged = true;
    out.diagnostics.outer_evaluations = 1;
  } else {
    const int max_evals = opts.max_outer_evaluations > 0 ? opts.max_outer_evaluations
                                                         : static_cast<int>(150 * p);
    OuterSearch os = maximize_marginal(engine, model, max_evals);
    theta_star = os.theta;
    star = os.mode;
    out.diagnostics.outer_converged = os.converged;
    out.diagnostics.outer_evaluations = os.evaluations;
  }
  if (star.x.size() == 0)
    throw Error(ErrorKind::NonConvergence, "latent mode could not be computed (Hessian not positive definite)");
  out.hyper_mode = theta_star;
  out.diagnostics.converged = star.converged;
  out.diagnostics.newton_iterations = star.iterations;
  out.diagnostics.max_gradient = star.max_gradient;
  out.diagnostics.log_marginal = star.log_marginal;
  if (!star.converged)
    out.diagnostics.message = "Newton iterations did not reach the gradient tolerance";

  comps.push_back({theta_star, star.x, 1.0});
  if (!opts.fixed_hyper) {
    curv = marginal_curvature(engine, theta_star, star);
    if (opts.ccd) {
      const double radius = std::sqrt(static_cast<double>(p + 1));
      comps.front().weight = 1.0 / static_cast<double>(p + 1);
      for (Index i = 0; i < p; ++i)
        for (int sign : {1, -1}) {
          const VectorXd th =
              theta_star + sign * radius / std::sqrt(curv.values(i)) * curv.axes.col(i);
          if (!inside_box(th, model.hyper().lambda_index())) continue;
          const ModePoint mp = engine.evaluate(th, star.x);
          if (!mp.converged || !std::isfinite(mp.log_marginal)) continue;
          const double ratio = mp.log_marginal - star.log_marginal + 0.5 * radius * radius;
          comps.push_back({th, mp.x, std::exp(std::min(ratio, 50.0)) / (2.0 * (p + 1))});
        }
    }
  } else {
    curv.axes = MatrixXd::Identity(p, p);
    curv.values = VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  }
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  for (auto& c : comps) c.weight /= wsum;
  out.diagnostics.mixture_components = static_cast<int>(comps.size());

  const AlphaMarginal am = alpha_marginal(engine, theta_star, star);

  // largest-remainder allocation of draws across components
  const int m = opts.n_draws;
  std::vector<int> counts(comps.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const double share = comps[i].weight * m;
    counts[i] = static_cast<int>(std::floor(share));
    assigned += counts[i];
    rem.push_back({share - counts[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < m; ++i, ++assigned) ++counts[rem[i % rem.size()].second];

  std::mt19937_64 rng(opts.seed);
  MatrixXd latent(m, model.dim());
  Index row = 0;
  double resid = model.constraint_residual(star.x);
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (counts[i] == 0) continue;
    const ModePoint mp = engine.evaluate(comps[i].theta, comps[i].x);
    if (mp.x.size() == 0) throw Error(ErrorKind::NonConvergence, "mixture component failed to refit");
    if (!mp.converged) out.diagnostics.converged = false;
    resid = std::max(resid, model.constraint_residual(mp.x));
    for (int k = 0; k < counts[i]; ++k) {
      VectorXd x = engine.draw(mp.x, rng);
      if (am.ok) x(0) = mp.x(0) + (am.mean - am.gauss_mean) + (x(0) - mp.x(0)) * (am.sd / am.gauss_sd);
      latent.row(row++) = x.transpose();
    }
  }
  out.diagnostics.constraint_residual = resid;

  MatrixXd theta_draws(m, p);
  std::normal_distribution<double> normal;
  for (Index r = 0; r < m; ++r) {
    VectorXd z(p);
    for (Index i = 0; i < p; ++i) z(i) = normal(rng);
    VectorXd th = theta_star;
    if (!opts.fixed_hyper) th += curv.axes * (z.array() / curv.values.array().sqrt()).matrix();
    theta_draws.row(r) = th.transpose();
  }

  detail::summarize_draws(model, d, latent, theta_draws, out);
  if (opts.keep_draws) out.draws = std::move(latent);
  return out;
}

}  // namespace stam
