#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include "fit_common.hpp"
#include "latent_model.hpp"
#include "stam/inference.hpp"

namespace stam {

namespace {

using detail::LatentModel;
using detail::PriorCoefs;

constexpr double kLogTauMin = -12.0, kLogTauMax = 25.0, kLogitMax = 12.0;
constexpr double kEtaGuard = 30.0;

// A contiguous run of latent coordinates updated together.
struct Group {
  Index begin = 0;
  Index size = 0;
  MatrixXd constraints;             // local coordinates
  std::vector<int> cell_local;      // per cell, vars_per_cell entries, -1 outside
};

class Sampler {
 public:
  Sampler(const LatentModel& m, const McmcOptions& o) : m_(m), o_(o) {
    const int nv = m_.vars_per_cell();
    auto make_group = [&](Index begin, Index size) {
      Group g;
      g.begin = begin;
      g.size = size;
      std::vector<VectorXd> rows;
      for (const auto& b : m_.blocks()) {
        if (b.offset < begin || b.offset + b.size > begin + size) continue;
        for (Index r = 0; r < b.constraints.rows(); ++r) {
          VectorXd row = VectorXd::Zero(size);
          row.segment(b.offset - begin, b.size) = b.constraints.row(r).transpose();
          rows.push_back(row);
        }
      }
      g.constraints.resize(static_cast<Index>(rows.size()), size);
      for (std::size_t r = 0; r < rows.size(); ++r) g.constraints.row(static_cast<Index>(r)) = rows[r];
      g.cell_local.assign(static_cast<std::size_t>(m_.n_cells() * nv), -1);
      for (Index c = 0; c < m_.n_cells(); ++c) {
        const Index* v = m_.cell_vars(c);
        for (int t = 0; t < nv; ++t)
          if (v[t] >= begin && v[t] < begin + size)
            g.cell_local[static_cast<std::size_t>(c * nv + t)] = static_cast<int>(v[t] - begin);
      }
      groups_.push_back(std::move(g));
    };
    if (o_.joint_latent) {
      if (o_.likelihood) make_group(0, m_.dim());
      else make_group(1, m_.dim() - 1);
    } else {
      for (const auto& s : m_.layout().blocks()) {
        if (s.block == Block::Alpha && !o_.likelihood) continue;
        make_group(s.offset, s.size);
      }
    }
  }

  /// Full prior-precision coefficients without the factorization jitter.
  PriorCoefs target_coefs(const VectorXd& theta) const {
    PriorCoefs c = m_.coefs(theta);
    for (const auto& b : m_.blocks()) {
      const auto s = static_cast<std::size_t>(b.slot);
      c.c[s] = b.block == Block::Phi ? c.tau[s] * (1.0 - c.lambda) : 0.0;
    }
    return c;
  }

  MatrixXd group_precision(const Group& g, const PriorCoefs& c) const {
    MatrixXd q = MatrixXd::Zero(g.size, g.size);
    for (const auto& t : m_.prior_terms()) {
      if (t.row < g.begin || t.row >= g.begin + g.size || t.col < g.begin) continue;
      const auto s = static_cast<std::size_t>(t.slot);
      const double v = c.a[s] * t.r + c.c[s] * t.i;
      const Index r = t.row - g.begin, cc = t.col - g.begin;
      q(r, cc) += v;
      if (r != cc) q(cc, r) += v;
    }
    return q;
  }

  // log conditional density of the group (up to a constant) at local value y
  double group_logpost(const Group& g, const VectorXd& y, const VectorXd& cur, const MatrixXd& q,
                       const VectorXd& eta) const {
    double f = -0.5 * y.dot(q * y);
    if (!o_.likelihood) return f;
    const int nv = m_.vars_per_cell();
    const VectorXd diff = y - cur;
    for (Index c = 0; c < m_.n_cells(); ++c) {
      double e = eta(c);
      for (int t = 0; t < nv; ++t) {
        const int l = g.cell_local[static_cast<std::size_t>(c * nv + t)];
        if (l >= 0) e += diff(l);
      }
      if (std::abs(e) > kEtaGuard) return -std::numeric_limits<double>::infinity();
      f += m_.loglik_cell(c, e);
    }
    return f;
  }

  // Negative Hessian of the group's conditional (jittered prior) at local y.
  MatrixXd group_hessian(const Group& g, const VectorXd& y, const VectorXd& cur,
                         const MatrixXd& q_prop, const VectorXd& eta, VectorXd& grad) const {
    MatrixXd h = q_prop;
    grad = -q_prop * y;
    if (!o_.likelihood) return h;
    const int nv = m_.vars_per_cell();
    const VectorXd diff = y - cur;
    int loc[7];
    for (Index c = 0; c < m_.n_cells(); ++c) {
      if (m_.expected()(c) <= 0.0) continue;
      double e = eta(c);
      int n = 0;
      for (int t = 0; t < nv; ++t) {
        const int l = g.cell_local[static_cast<std::size_t>(c * nv + t)];
        if (l >= 0) {
          e += diff(l);
          loc[n++] = l;
        }
      }
      if (n == 0) continue;
      const double w = m_.expected()(c) * std::exp(e);
      const double r = m_.observed()(c) - w;
      for (int a = 0; a < n; ++a) {
        grad(loc[a]) += r;
        for (int b = 0; b < n; ++b) h(loc[a], loc[b]) += w;
      }
    }
    return h;
  }

  VectorXd krige(const MatrixXd& a, const MatrixXd& v, const Eigen::LLT<MatrixXd>& s,
                 const VectorXd& x) const {
    if (a.rows() == 0) return x;
    return x - v * s.solve(a * x);
  }

  // One Metropolis-Hastings update of a group with an independence proposal
  // from the Gaussian approximation at the conditional mode.
  bool update_group(const Group& g, const PriorCoefs& target, const PriorCoefs& prop,
                    VectorXd& x, VectorXd& eta, std::mt19937_64& rng) {
    const MatrixXd q_t = group_precision(g, target);
    const MatrixXd q_p = group_precision(g, prop);
    const VectorXd cur = x.segment(g.begin, g.size);
    const MatrixXd& a = g.constraints;

    // conditional mode by constrained Newton, warm-started at the current state
    VectorXd y = cur, grad;
    MatrixXd h;
    Eigen::LLT<MatrixXd> llt;
    MatrixXd v;
    Eigen::LLT<MatrixXd> s;
    auto prop_obj = [&](const VectorXd& z) { return group_logpost(g, z, cur, q_p, eta); };
    double fy = prop_obj(y);
    for (int it = 0; it < 60; ++it) {
      h = group_hessian(g, y, cur, q_p, eta, grad);
      llt.compute(h);
      if (llt.info() != Eigen::Success) return false;
      if (a.rows() > 0) {
        v = llt.solve(a.transpose());
        s.compute(a * v);
      }
      const VectorXd step = krige(a, v, s, llt.solve(grad));
      if (step.cwiseAbs().maxCoeff() < 1e-11 || grad.dot(step) < 1e-20) break;
      double t = 1.0;
      for (int k = 0; k < 30; ++k, t *= 0.5) {
        const VectorXd yn = y + t * step;
        const double fn = prop_obj(yn);
        if (fn >= fy - 1e-12 * (1.0 + std::abs(fy))) {
          y = yn;
          fy = fn;
          break;
        }
      }
    }
    h = group_hessian(g, y, cur, q_p, eta, grad);
    llt.compute(h);
    if (llt.info() != Eigen::Success) return false;
    if (a.rows() > 0) {
      v = llt.solve(a.transpose());
      s.compute(a * v);
    }

    VectorXd w(g.size);
    for (Index i = 0; i < g.size; ++i) w(i) = normal_(rng);
    VectorXd z = llt.matrixU().solve(w);
    z = krige(a, v, s, krige(a, v, s, z));
    const VectorXd cand = y + z;
    const VectorXd dc = cur - y;
    const double log_q_cand = -0.5 * z.dot(h * z);
    const double log_q_cur = -0.5 * dc.dot(h * dc);
    const double log_ratio = group_logpost(g, cand, cur, q_t, eta) -
                             group_logpost(g, cur, cur, q_t, eta) + log_q_cur - log_q_cand;
    if (!(std::log(unif_(rng)) < log_ratio)) return false;

    const int nv = m_.vars_per_cell();
    const VectorXd diff = cand - cur;
    for (Index c = 0; c < m_.n_cells(); ++c)
      for (int t = 0; t < nv; ++t) {
        const int l = g.cell_local[static_cast<std::size_t>(c * nv + t)];
        if (l >= 0) eta(c) += diff(l);
      }
    x.segment(g.begin, g.size) = cand;
    return true;
  }

  double hyper_logpost(const VectorXd& theta, const VectorXd& x) const {
    const Index li = m_.hyper().lambda_index();
    for (Index p = 0; p < theta.size(); ++p) {
      if (p == li ? std::abs(theta(p)) > kLogitMax : (theta(p) < kLogTauMin || theta(p) > kLogTauMax))
        return -std::numeric_limits<double>::infinity();
    }
    const PriorCoefs c = target_coefs(theta);
    double quad = 0.0;
    for (const auto& t : m_.prior_terms()) {
      const auto s = static_cast<std::size_t>(t.slot);
      const double v = c.a[s] * t.r + c.c[s] * t.i;
      quad += (t.row == t.col ? 1.0 : 2.0) * v * x(t.row) * x(t.col);
    }
    return log_hyperprior(m_.hyper().from_internal(theta), o_.prior) + m_.log_prior_normalizer(c) -
           0.5 * quad;
  }

  FitResult run(const Dataset& d) {
    std::mt19937_64 rng(o_.seed);
    const Index p = m_.hyper().size();
    VectorXd x = m_.start();
    if (!o_.likelihood) x(0) = 0.0;
    VectorXd eta = m_.eta(x);
    VectorXd theta = o_.fixed_hyper ? m_.hyper().to_internal(*o_.fixed_hyper) : VectorXd::Zero(p);
    VectorXd step = VectorXd::Constant(p, 0.5);

    const int iters = o_.iterations;
    const int burn = o_.burn_in >= 0 ? o_.burn_in : iters / 4;
    if (iters - burn < 10) throw Error(ErrorKind::InsufficientDraws, "too few post-burn-in iterations");
    const int thin = std::max(1, (iters - burn) / std::max(1, o_.max_kept));
    const int kept = (iters - burn) / thin;
    MatrixXd latent(kept, m_.dim());
    MatrixXd thetas(kept, p);

    long long lat_acc = 0, lat_tries = 0;
    std::vector<long long> hyp_acc(static_cast<std::size_t>(p), 0), batch_acc(static_cast<std::size_t>(p), 0);
    int batch_n = 0, batches = 0;
    int row = 0;
    double lp_theta = hyper_logpost(theta, x);

    for (int it = 0; it < iters; ++it) {
      const PriorCoefs target = target_coefs(theta);
      const PriorCoefs prop = m_.coefs(theta);
      for (const auto& g : groups_) {
        ++lat_tries;
        if (update_group(g, target, prop, x, eta, rng)) ++lat_acc;
      }
      if (!o_.fixed_hyper) {
        lp_theta = hyper_logpost(theta, x);
        for (Index k = 0; k < p; ++k) {
          VectorXd cand = theta;
          cand(k) += step(k) * normal_(rng);
          const double lc = hyper_logpost(cand, x);
          if (std::log(unif_(rng)) < lc - lp_theta) {
            theta = cand;
            lp_theta = lc;
            ++batch_acc[static_cast<std::size_t>(k)];
            if (it >= burn) ++hyp_acc[static_cast<std::size_t>(k)];
          }
        }
        if (it < burn && ++batch_n == 50) {
          ++batches;
          const double delta = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batches)));
          for (Index k = 0; k < p; ++k) {
            const double rate = batch_acc[static_cast<std::size_t>(k)] / 50.0;
            step(k) *= std::exp(rate > 0.44 ? delta : -delta);
            batch_acc[static_cast<std::size_t>(k)] = 0;
          }
          batch_n = 0;
        }
      }
      if (it >= burn && (it - burn) % thin == 0 && row < kept) {
        latent.row(row) = x.transpose();
        thetas.row(row) = theta.transpose();
        ++row;
      }
    }

    FitResult out;
    out.prior = o_.prior;
    out.diagnostics.method = "mcmc";
    out.diagnostics.iterations = iters;
    out.diagnostics.converged = true;
    out.diagnostics.outer_converged = true;
    out.diagnostics.latent_acceptance = lat_tries > 0 ? static_cast<double>(lat_acc) / lat_tries : 0.0;
    for (Index k = 0; k < p; ++k)
      out.diagnostics.hyper_acceptance.push_back(
          o_.fixed_hyper ? 0.0 : static_cast<double>(hyp_acc[static_cast<std::size_t>(k)]) / (iters - burn));
    out.hyper_mode = thetas.colwise().mean().transpose();
    detail::summarize_draws(m_, d, latent, thetas, out);
    if (o_.keep_draws) out.draws = std::move(latent);
    return out;
  }

 private:
  const LatentModel& m_;
  McmcOptions o_;
  std::vector<Group> groups_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace

FitResult fit_mcmc(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                   const ModelSpec& spec, const McmcOptions& opts) {
  if (opts.iterations < 20) throw Error(ErrorKind::InvalidInput, "MCMC needs at least 20 iterations");
  if (opts.fixed_hyper) validate(*opts.fixed_hyper);
  const LatentModel model(d, expected, g, spec);
  Sampler sampler(model, opts);
  return sampler.run(d);
}

}  // namespace stam
