#include "stam/standardize.hpp"

#include <charconv>

#include "stam/error.hpp"

namespace stam {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

VectorXd stratum_rates(const Dataset& d) {
  const Dims dims = d.dims();
  VectorXd q(dims.K);
  for (int k = 0; k < dims.K; ++k) {
    double o = 0.0, n = 0.0;
    for (int i = 0; i < dims.S; ++i)
      for (int j = 0; j < dims.T; ++j) {
        o += d.O(i, j, k);
        n += d.N(i, j, k);
      }
    if (!(n > 0.0))
      throw Error(ErrorKind::EmptyStratum,
                  "stratum " + std::to_string(k) + " ('" + d.age_labels[k] +
                      "') has zero total population");
    q(k) = o / n;
  }
  return q;
}

StandardizationResult expected_counts(const Dataset& d, const VectorXd& q) {
  const Dims dims = d.dims();
  if (q.size() != dims.K)
    throw Error(ErrorKind::InvalidInput, "rate vector length " + std::to_string(q.size()) +
                                             " does not match K = " + std::to_string(dims.K));
  if ((q.array() < 0.0).any())
    throw Error(ErrorKind::InvalidInput, "reference rates must be non-negative");
  StandardizationResult r;
  r.q = q;
  r.expected.resize(dims.n_cells());
  r.expected_collapsed = MatrixXd::Zero(dims.S, dims.T);
  r.sir.assign(static_cast<std::size_t>(dims.S) * dims.T, std::nullopt);
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j) {
      double o = 0.0;
      for (int k = 0; k < dims.K; ++k) {
        const double e = d.N(i, j, k) * q(k);
        r.expected(dims.cell(i, j, k)) = e;
        r.expected_collapsed(i, j) += e;
        o += d.O(i, j, k);
      }
      if (r.expected_collapsed(i, j) > 0.0)
        r.sir[static_cast<std::size_t>(i) * dims.T + j] = o / r.expected_collapsed(i, j);
    }
  return r;
}

VectorXd global_rate_expected(const Dataset& d) {
  const double n = d.population.sum();
  if (!(n > 0.0)) throw Error(ErrorKind::InvalidInput, "total population is zero");
  return d.population * (d.observed.sum() / n);
}

int ProportionalityReport::n_assessed() const {
  int n = 0;
  for (const auto& c : cells) n += c.assessed ? 1 : 0;
  return n;
}

int ProportionalityReport::n_flagged() const {
  int n = 0;
  for (const auto& c : cells) n += c.flag ? 1 : 0;
  return n;
}

double ProportionalityReport::flagged_fraction() const {
  const int a = n_assessed();
  return a == 0 ? 0.0 : static_cast<double>(n_flagged()) / a;
}

CellDiagnostic fit_through_origin(const std::vector<double>& q, const std::vector<double>& rate) {
  CellDiagnostic c;
  c.n_points = static_cast<int>(q.size());
  double sqq = 0.0, sqy = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    sqq += q[k] * q[k];
    sqy += q[k] * rate[k];
    mean += rate[k];
  }
  if (q.empty()) return c;
  mean /= static_cast<double>(q.size());
  c.slope = sqq > 0.0 ? sqy / sqq : 0.0;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double r = rate[k] - c.slope * q[k];
    ss_res += r * r;
    ss_tot += (rate[k] - mean) * (rate[k] - mean);
  }
  if (ss_tot > 0.0) c.r2 = 1.0 - ss_res / ss_tot;
  else c.r2 = ss_res > 0.0 ? 0.0 : 1.0;
  return c;
}

ProportionalityReport proportionality_check(const Dataset& d, const VectorXd& q,
                                            const ProportionalityOptions& opts) {
  const Dims dims = d.dims();
  if (opts.min_points < 3)
    throw Error(ErrorKind::InvalidInput, "proportionality check needs min_points >= 3");
  if (q.size() != dims.K) throw Error(ErrorKind::InvalidInput, "rate vector length mismatch");
  ProportionalityReport rep;
  rep.cells.reserve(static_cast<std::size_t>(dims.S) * dims.T);
  std::vector<double> qs, ys;
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j) {
      qs.clear();
      ys.clear();
      for (int k = 0; k < dims.K; ++k) {
        const double n = d.N(i, j, k);
        if (!(n > 0.0)) continue;
        const double y = d.O(i, j, k) / n;
        qs.push_back(q(k));
        ys.push_back(y);
        rep.points.push_back({i, j, k, q(k), y});
      }
      CellDiagnostic c;
      if (static_cast<int>(qs.size()) >= opts.min_points) {
        c = fit_through_origin(qs, ys);
        c.assessed = true;
        c.flag = c.r2 < opts.r2_threshold;
      }
      c.i = i;
      c.j = j;
      c.n_points = static_cast<int>(qs.size());
      rep.cells.push_back(c);
    }
  return rep;
}

std::string format_report_csv(const Dataset& d, const ProportionalityReport& r) {
  std::string out = "area_id,period,slope,r2,flag,assessed\n";
  for (const auto& c : r.cells) {
    out += d.area_ids[c.i] + "," + d.period_labels[c.j] + ",";
    if (c.assessed) out += num(c.slope) + "," + num(c.r2) + "," + (c.flag ? "1" : "0");
    else out += ",,";
    out += std::string(",") + (c.assessed ? "1" : "0") + "\n";
  }
  return out;
}

std::string format_points_csv(const Dataset& d, const ProportionalityReport& r) {
  std::string out = "area_id,period,age_group,q,rate\n";
  for (const auto& p : r.points)
    out += d.area_ids[p.i] + "," + d.period_labels[p.j] + "," + d.age_labels[p.k] + "," +
           num(p.q) + "," + num(p.rate) + "\n";
  return out;
}

}  // namespace stam
