#include "stam/model.hpp"

#include <cmath>

#include "stam/error.hpp"

namespace stam {

namespace {

constexpr InteractionType kTypes[4] = {InteractionType::I, InteractionType::II,
                                       InteractionType::III, InteractionType::IV};

using Mains = std::pair<MainStructure, MainStructure>;

// delta varies fastest, as in the published table
std::vector<Mains> both_mains() {
  return {{MainStructure::Iid, MainStructure::Iid},
          {MainStructure::Rw1, MainStructure::Iid},
          {MainStructure::Iid, MainStructure::Rw1},
          {MainStructure::Rw1, MainStructure::Rw1}};
}

// Type pairs in "shell" order: for m = I..IV, (m, b<m), (a<m, m), (m, m).
std::vector<std::pair<int, int>> pair_order() {
  std::vector<std::pair<int, int>> out;
  for (int m = 0; m < 4; ++m) {
    for (int b = 0; b < m; ++b) out.emplace_back(m, b);
    for (int a = 0; a < m; ++a) out.emplace_back(a, m);
    out.emplace_back(m, m);
  }
  return out;
}

// Type triples (z1, z2, z3) in the order of the published 256-model block.
std::vector<std::array<int, 3>> triple_order() {
  std::vector<std::array<int, 3>> out;
  for (int a = 0; a < 4; ++a) out.push_back({a, 0, 0});
  for (int b = 1; b < 4; ++b) out.push_back({0, b, 0});
  for (int c = 1; c < 4; ++c) out.push_back({0, 0, c});
  for (int a = 1; a < 4; ++a) {
    for (int b = 1; b < 4; ++b) out.push_back({a, b, 0});
    for (int c = 1; c < 4; ++c) out.push_back({a, 0, c});
  }
  for (int c = 0; c < 4; ++c) {
    if (c == 0) continue;
    for (int a = 0; a < 4; ++a)
      for (int b = 1; b < 4; ++b) out.push_back({a, b, c});
  }
  return out;
}

}  // namespace

std::vector<ModelSpec> enumerate_models() {
  std::vector<ModelSpec> out;
  out.reserve(520);
  const MainStructure mains[2] = {MainStructure::Iid, MainStructure::Rw1};
  auto add = [&](MainStructure d, MainStructure g, std::optional<InteractionType> z1,
                 std::optional<InteractionType> z2, std::optional<InteractionType> z3) {
    ModelSpec s;
    s.delta = d;
    s.gamma = g;
    s.zeta1 = z1;
    s.zeta2 = z2;
    s.zeta3 = z3;
    out.push_back(s);
  };
  const auto none = std::nullopt;
  const auto absent = MainStructure::Absent;

  for (auto d : mains) add(d, absent, none, none, none);
  for (auto g : mains) add(absent, g, none, none, none);
  for (auto [d, g] : both_mains()) add(d, g, none, none, none);
  for (auto t : kTypes)
    for (auto d : mains) add(d, absent, t, none, none);
  for (auto t : kTypes)
    for (auto [d, g] : both_mains()) add(d, g, t, none, none);
  for (auto t : kTypes)
    for (auto g : mains) add(absent, g, none, t, none);
  for (auto t : kTypes)
    for (auto [d, g] : both_mains()) add(d, g, none, t, none);
  for (auto t : kTypes)
    for (auto [d, g] : both_mains()) add(d, g, none, none, t);
  for (auto [a, b] : pair_order())
    for (auto [d, g] : both_mains()) add(d, g, kTypes[a], kTypes[b], none);
  for (auto [a, b] : pair_order())
    for (auto [d, g] : both_mains()) add(d, g, kTypes[a], none, kTypes[b]);
  for (auto [a, b] : pair_order())
    for (auto [d, g] : both_mains()) add(d, g, none, kTypes[a], kTypes[b]);
  for (auto t : triple_order())
    for (auto [d, g] : both_mains()) add(d, g, kTypes[t[0]], kTypes[t[1]], kTypes[t[2]]);
  return out;
}

int enumeration_group(const ModelSpec& s) {
  const int n_int = (s.zeta1 ? 1 : 0) + (s.zeta2 ? 1 : 0) + (s.zeta3 ? 1 : 0);
  if (n_int == 3) return 11;
  if (n_int == 2) return s.zeta3 ? (s.zeta1 ? 9 : 10) : 8;
  if (n_int == 1) {
    if (s.zeta1) return s.has_gamma() ? 4 : 3;
    if (s.zeta2) return s.has_delta() ? 6 : 5;
    return 7;
  }
  if (s.has_delta() && s.has_gamma()) return 2;
  return s.has_delta() ? 0 : 1;
}

std::string block_name(Block b) {
  switch (b) {
    case Block::Alpha: return "alpha";
    case Block::Phi: return "phi";
    case Block::Delta: return "delta";
    case Block::Gamma: return "gamma";
    case Block::Zeta1: return "zeta1";
    case Block::Zeta2: return "zeta2";
    case Block::Zeta3: return "zeta3";
  }
  return "";
}

LatentLayout::LatentLayout(const ModelSpec& spec, Dims dims) : spec_(spec), dims_(dims) {
  validate(spec);
  offset_.fill(-1);
  auto push = [&](Block b, Index size) {
    offset_[static_cast<int>(b)] = dim_;
    blocks_.push_back({b, dim_, size});
    dim_ += size;
  };
  push(Block::Alpha, 1);
  push(Block::Phi, dims.S);
  if (spec.has_delta()) push(Block::Delta, dims.T);
  if (spec.has_gamma()) push(Block::Gamma, dims.K);
  if (spec.zeta1) push(Block::Zeta1, static_cast<Index>(dims.S) * dims.T);
  if (spec.zeta2) push(Block::Zeta2, static_cast<Index>(dims.S) * dims.K);
  if (spec.zeta3) push(Block::Zeta3, static_cast<Index>(dims.K) * dims.T);
}

std::optional<BlockSlice> LatentLayout::find(Block b) const {
  for (const auto& s : blocks_)
    if (s.block == b) return s;
  return std::nullopt;
}

int LatentLayout::cell_indices(int i, int j, int k, std::array<Index, 7>& out) const {
  int n = 0;
  out[n++] = 0;
  out[n++] = offset_[1] + i;
  if (offset_[2] >= 0) out[n++] = offset_[2] + j;
  if (offset_[3] >= 0) out[n++] = offset_[3] + k;
  if (offset_[4] >= 0) out[n++] = offset_[4] + static_cast<Index>(i) * dims_.T + j;
  if (offset_[5] >= 0) out[n++] = offset_[5] + static_cast<Index>(i) * dims_.K + k;
  if (offset_[6] >= 0) out[n++] = offset_[6] + static_cast<Index>(k) * dims_.T + j;
  return n;
}

VectorXd flatten(const LatentLayout& layout, const LatentState& x) {
  VectorXd out(layout.dim());
  for (const auto& s : layout.blocks()) {
    auto seg = out.segment(s.offset, s.size);
    auto put = [&](const std::optional<VectorXd>& v) {
      if (!v || v->size() != s.size)
        throw Error(ErrorKind::SpecificationMismatch,
                    "latent block '" + block_name(s.block) + "' missing or mis-sized");
      seg = *v;
    };
    switch (s.block) {
      case Block::Alpha: seg(0) = x.alpha; break;
      case Block::Phi: put(x.phi); break;
      case Block::Delta: put(x.delta); break;
      case Block::Gamma: put(x.gamma); break;
      case Block::Zeta1: put(x.zeta1); break;
      case Block::Zeta2: put(x.zeta2); break;
      case Block::Zeta3: put(x.zeta3); break;
    }
  }
  return out;
}

LatentState unflatten(const LatentLayout& layout, const VectorXd& flat) {
  LatentState x;
  for (const auto& s : layout.blocks()) {
    const VectorXd seg = flat.segment(s.offset, s.size);
    switch (s.block) {
      case Block::Alpha: x.alpha = seg(0); break;
      case Block::Phi: x.phi = seg; break;
      case Block::Delta: x.delta = seg; break;
      case Block::Gamma: x.gamma = seg; break;
      case Block::Zeta1: x.zeta1 = seg; break;
      case Block::Zeta2: x.zeta2 = seg; break;
      case Block::Zeta3: x.zeta3 = seg; break;
    }
  }
  return x;
}

double linear_predictor(const ModelSpec& spec, const LatentState& x, int i, int j, int k) {
  auto need = [](const std::optional<VectorXd>& v, const char* name) -> const VectorXd& {
    if (!v)
      throw Error(ErrorKind::SpecificationMismatch,
                  std::string("latent block '") + name + "' required by the spec is missing");
    return *v;
  };
  auto at = [](const VectorXd& v, Index idx, const char* name) {
    if (idx < 0 || idx >= v.size())
      throw Error(ErrorKind::SpecificationMismatch,
                  std::string("index out of range in latent block '") + name + "'");
    return v(idx);
  };
  double eta = x.alpha + at(x.phi, i, "phi");
  if (spec.has_delta()) eta += at(need(x.delta, "delta"), j, "delta");
  if (spec.has_gamma()) eta += at(need(x.gamma, "gamma"), k, "gamma");
  if (spec.zeta1) {
    const Index T = need(x.delta, "delta").size();
    eta += at(need(x.zeta1, "zeta1"), i * T + j, "zeta1");
  }
  if (spec.zeta2) {
    const Index K = need(x.gamma, "gamma").size();
    eta += at(need(x.zeta2, "zeta2"), i * K + k, "zeta2");
  }
  if (spec.zeta3) {
    const Index T = need(x.delta, "delta").size();
    eta += at(need(x.zeta3, "zeta3"), k * T + j, "zeta3");
  }
  return eta;
}

VectorXd linear_predictor_all(const LatentLayout& layout, const VectorXd& flat) {
  const Dims& dims = layout.dims();
  VectorXd eta(dims.n_cells());
  std::array<Index, 7> idx{};
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        const int n = layout.cell_indices(i, j, k, idx);
        double e = 0.0;
        for (int t = 0; t < n; ++t) e += flat(idx[t]);
        eta(dims.cell(i, j, k)) = e;
      }
  return eta;
}

void check_expected(const Dataset& d, const VectorXd& expected) {
  const Dims dims = d.dims();
  if (expected.size() != dims.n_cells())
    throw Error(ErrorKind::InvalidInput, "expected counts do not cover the lattice");
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        const double e = expected(dims.cell(i, j, k));
        if (!(e >= 0.0) || !std::isfinite(e))
          throw Error(ErrorKind::InvalidInput, "expected counts must be finite and >= 0");
        if (e == 0.0 && d.O(i, j, k) > 0.0)
          throw Error(ErrorKind::ImpossibleCell,
                      "cell (" + d.area_ids[i] + "," + d.period_labels[j] + "," +
                          d.age_labels[k] + ") has observed count " +
                          std::to_string(static_cast<long long>(d.O(i, j, k))) +
                          " but zero expected count");
      }
}

LogLikelihood poisson_loglik(const VectorXd& observed, const VectorXd& expected,
                             const VectorXd& eta) {
  LogLikelihood ll;
  ll.pointwise = VectorXd::Zero(observed.size());
  for (Index c = 0; c < observed.size(); ++c) {
    const double e = expected(c), o = observed(c);
    if (e <= 0.0) {
      if (o > 0.0)
        throw Error(ErrorKind::ImpossibleCell,
                    "cell " + std::to_string(c) + " has a positive count but zero expected");
      continue;
    }
    ll.pointwise(c) = o * (std::log(e) + eta(c)) - e * std::exp(eta(c)) - std::lgamma(o + 1.0);
  }
  ll.total = ll.pointwise.sum();
  return ll;
}

LogLikelihood poisson_loglik(const Dataset& d, const VectorXd& expected, const ModelSpec& spec,
                             const LatentState& x) {
  check_expected(d, expected);
  const Dims dims = d.dims();
  VectorXd eta(dims.n_cells());
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) eta(dims.cell(i, j, k)) = linear_predictor(spec, x, i, j, k);
  return poisson_loglik(d.observed, expected, eta);
}

void validate(const Hyperparameters& h) {
  auto check_tau = [](const std::optional<double>& t, const char* name) {
    if (t && !(*t > 0.0 && std::isfinite(*t)))
      throw Error(ErrorKind::InvalidHyperparameter, std::string(name) + " must be positive");
  };
  check_tau(h.tau_phi, "tau_phi");
  check_tau(h.tau_delta, "tau_delta");
  check_tau(h.tau_gamma, "tau_gamma");
  check_tau(h.tau_zeta1, "tau_zeta1");
  check_tau(h.tau_zeta2, "tau_zeta2");
  check_tau(h.tau_zeta3, "tau_zeta3");
  if (!(h.lambda_phi >= 0.0 && h.lambda_phi <= 1.0))
    throw Error(ErrorKind::InvalidHyperparameter, "lambda_phi must lie in [0, 1]");
}

Hyperparameters default_hyperparameters(const ModelSpec& spec, double tau, double lambda) {
  Hyperparameters h;
  h.tau_phi = tau;
  h.lambda_phi = lambda;
  if (spec.has_delta()) h.tau_delta = tau;
  if (spec.has_gamma()) h.tau_gamma = tau;
  if (spec.zeta1) h.tau_zeta1 = tau;
  if (spec.zeta2) h.tau_zeta2 = tau;
  if (spec.zeta3) h.tau_zeta3 = tau;
  return h;
}

std::string to_string(PriorFamily f) {
  return f == PriorFamily::PC ? "pc" : "noninformative";
}

PriorFamily parse_prior_family(std::string_view s) {
  if (s == "pc" || s == "PC") return PriorFamily::PC;
  if (s == "noninformative" || s == "flat") return PriorFamily::NonInformative;
  throw Error(ErrorKind::InvalidInput, "unknown prior family '" + std::string(s) + "'");
}

double pc_rate(double u, double tail) { return -std::log(tail) / u; }

double log_prior_sigma(double sigma, PriorFamily family) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidHyperparameter, "sigma must be positive");
  if (family == PriorFamily::NonInformative) return 0.0;
  const double rate = pc_rate();
  return std::log(rate) - rate * sigma;
}

double log_hyperprior(const Hyperparameters& h, PriorFamily family) {
  validate(h);
  double lp = 0.0;
  auto add_tau = [&](const std::optional<double>& tau) {
    if (!tau) return;
    const double sigma = 1.0 / std::sqrt(*tau);
    // d sigma / d log tau = -sigma / 2
    lp += log_prior_sigma(sigma, family) + std::log(0.5 * sigma);
  };
  add_tau(h.tau_phi);
  add_tau(h.tau_delta);
  add_tau(h.tau_gamma);
  add_tau(h.tau_zeta1);
  add_tau(h.tau_zeta2);
  add_tau(h.tau_zeta3);
  // uniform lambda on [0, 1], Jacobian of the logit
  lp += std::log(h.lambda_phi) + std::log1p(-h.lambda_phi);
  return lp;
}

HyperLayout::HyperLayout(const ModelSpec& spec) {
  precisions.push_back(Block::Phi);
  if (spec.has_delta()) precisions.push_back(Block::Delta);
  if (spec.has_gamma()) precisions.push_back(Block::Gamma);
  if (spec.zeta1) precisions.push_back(Block::Zeta1);
  if (spec.zeta2) precisions.push_back(Block::Zeta2);
  if (spec.zeta3) precisions.push_back(Block::Zeta3);
}

std::vector<std::string> HyperLayout::names() const {
  std::vector<std::string> out;
  for (Block b : precisions) out.push_back("sigma_" + block_name(b));
  out.push_back("lambda_phi");
  return out;
}

VectorXd HyperLayout::to_internal(const Hyperparameters& h) const {
  VectorXd theta(size());
  auto tau_of = [&](Block b) -> double {
    std::optional<double> t;
    switch (b) {
      case Block::Phi: t = h.tau_phi; break;
      case Block::Delta: t = h.tau_delta; break;
      case Block::Gamma: t = h.tau_gamma; break;
      case Block::Zeta1: t = h.tau_zeta1; break;
      case Block::Zeta2: t = h.tau_zeta2; break;
      case Block::Zeta3: t = h.tau_zeta3; break;
      default: break;
    }
    if (!t)
      throw Error(ErrorKind::SpecificationMismatch,
                  "missing precision for block '" + block_name(b) + "'");
    return *t;
  };
  for (std::size_t p = 0; p < precisions.size(); ++p)
    theta(static_cast<Index>(p)) = std::log(tau_of(precisions[p]));
  const double lam = h.lambda_phi;
  theta(lambda_index()) = std::log(lam) - std::log1p(-lam);
  return theta;
}

Hyperparameters HyperLayout::from_internal(const VectorXd& theta) const {
  Hyperparameters h;
  for (std::size_t p = 0; p < precisions.size(); ++p) {
    const double tau = std::exp(theta(static_cast<Index>(p)));
    switch (precisions[p]) {
      case Block::Phi: h.tau_phi = tau; break;
      case Block::Delta: h.tau_delta = tau; break;
      case Block::Gamma: h.tau_gamma = tau; break;
      case Block::Zeta1: h.tau_zeta1 = tau; break;
      case Block::Zeta2: h.tau_zeta2 = tau; break;
      case Block::Zeta3: h.tau_zeta3 = tau; break;
      default: break;
    }
  }
  h.lambda_phi = 1.0 / (1.0 + std::exp(-theta(lambda_index())));
  return h;
}

double HyperLayout::tau(const VectorXd& theta, Block b) const {
  for (std::size_t p = 0; p < precisions.size(); ++p)
    if (precisions[p] == b) return std::exp(theta(static_cast<Index>(p)));
  throw Error(ErrorKind::SpecificationMismatch, "no precision for block '" + block_name(b) + "'");
}

}  // namespace stam
