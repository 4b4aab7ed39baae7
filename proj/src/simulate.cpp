#include "stam/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "stam/error.hpp"
#include "stam/gmrf.hpp"
#include "stam/standardize.hpp"

namespace stam {

std::string to_string(PopulationPolicy p) {
  return p == PopulationPolicy::Constant ? "constant" : "age_pyramid";
}

PopulationPolicy parse_population_policy(std::string_view s) {
  if (s == "constant") return PopulationPolicy::Constant;
  if (s == "age_pyramid" || s == "pyramid") return PopulationPolicy::AgePyramid;
  throw Error(ErrorKind::InvalidInput, "unknown population policy '" + std::string(s) + "'");
}

VectorXd designated_rates(int K) {
  VectorXd q(K);
  for (int k = 0; k < K; ++k) {
    const double t = K == 1 ? 0.0 : static_cast<double>(k) / (K - 1);
    q(k) = 5e-4 * std::pow(10.0, t);
  }
  return q;
}

VectorXd make_populations(const Populations& pop, int S, int T, int K) {
  if (!(pop.per_cell > 0.0) || !std::isfinite(pop.per_cell))
    throw Error(ErrorKind::InvalidInput, "population per cell must be positive");
  VectorXd n(static_cast<Index>(S) * T * K);
  const Dims dims{S, T, K};
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < T; ++j)
      for (int k = 0; k < K; ++k) {
        double w = 1.0;
        if (pop.policy == PopulationPolicy::AgePyramid && K > 1)
          w = 1.5 - static_cast<double>(k) / (K - 1);
        n(dims.cell(i, j, k)) = std::round(pop.per_cell * w);
      }
  return n;
}

namespace {

StructureMatrix main_structure(MainStructure s, Index n) {
  return s == MainStructure::Rw1 ? rw1_structure(n) : identity_structure(n);
}

SparseMatrix jittered(const StructureMatrix& r, double tau) {
  SparseMatrix id(r.dim(), r.dim());
  id.setIdentity();
  SparseMatrix q = tau * r.entries;
  if (r.rank_deficiency > 0) q += (tau * kStructureJitter) * id;
  return q;
}

VectorXd draw_block(const SparseMatrix& q, const ConstraintSet& cons, std::mt19937_64& rng) {
  const ConstrainedGaussian cg(q, cons.rows);
  return cg.condition(cg.sample(rng));
}

StructureMatrix interaction_for(InteractionKind kind, const StructureMatrix& left, Index nl,
                                const StructureMatrix& right, Index nr) {
  const auto [sl, sr] = structured_operands(kind);
  return interaction_structure(kind, sl ? left : identity_structure(nl),
                               sr ? right : identity_structure(nr));
}

}  // namespace

Simulation simulate_dataset(const SpatialGraph& g, int T, int K, const ModelSpec& spec,
                            const Hyperparameters& hyper, double alpha, const Populations& pop,
                            std::uint64_t seed) {
  validate(spec);
  validate(hyper);
  const int S = g.n_areas();
  if (S < 1 || T < 1 || K < 1) throw Error(ErrorKind::InvalidDimension, "S, T and K must be >= 1");
  auto need = [](const std::optional<double>& t, const char* name) {
    if (!t) throw Error(ErrorKind::SpecificationMismatch, std::string("missing ") + name);
    return *t;
  };

  std::mt19937_64 rng(seed);
  const auto comps = connected_components(g);
  const auto cons = constraint_set(spec, S, T, K, comps);
  const StructureMatrix r_phi = icar_structure(g);

  Simulation sim;
  sim.spec = spec;
  sim.hyper = hyper;
  LatentState& x = sim.truth;
  x.alpha = alpha;
  {
    SparseMatrix q = leroux_precision(r_phi, hyper.lambda_phi, hyper.tau_phi);
    SparseMatrix id(S, S);
    id.setIdentity();
    q += (hyper.tau_phi * kStructureJitter) * id;
    x.phi = draw_block(q, cons.at("phi"), rng);
  }
  if (spec.has_delta())
    x.delta = draw_block(jittered(main_structure(spec.delta, T), need(hyper.tau_delta, "tau_delta")),
                         cons.at("delta"), rng);
  if (spec.has_gamma())
    x.gamma = draw_block(jittered(main_structure(spec.gamma, K), need(hyper.tau_gamma, "tau_gamma")),
                         cons.at("gamma"), rng);
  auto rw_or_id = [](Index n) { return n >= 2 ? rw1_structure(n) : identity_structure(n); };
  if (spec.zeta1) {
    const auto r = interaction_for({InteractionWhich::SpaceTime, *spec.zeta1}, r_phi, S, rw_or_id(T), T);
    x.zeta1 = draw_block(jittered(r, need(hyper.tau_zeta1, "tau_zeta1")), cons.at("zeta1"), rng);
  }
  if (spec.zeta2) {
    const auto r = interaction_for({InteractionWhich::SpaceAge, *spec.zeta2}, r_phi, S, rw_or_id(K), K);
    x.zeta2 = draw_block(jittered(r, need(hyper.tau_zeta2, "tau_zeta2")), cons.at("zeta2"), rng);
  }
  if (spec.zeta3) {
    const auto r = interaction_for({InteractionWhich::TimeAge, *spec.zeta3}, rw_or_id(K), K, rw_or_id(T), T);
    x.zeta3 = draw_block(jittered(r, need(hyper.tau_zeta3, "tau_zeta3")), cons.at("zeta3"), rng);
  }

  Dataset& d = sim.data;
  d.area_ids = g.area_ids;
  for (int j = 0; j < T; ++j) d.period_labels.push_back("p" + std::to_string(j + 1));
  for (int k = 0; k < K; ++k) d.age_labels.push_back("g" + std::to_string(k + 1));
  d.population = make_populations(pop, S, T, K);
  sim.rates = designated_rates(K);
  const Dims dims = d.dims();
  sim.expected.resize(dims.n_cells());
  d.observed.resize(dims.n_cells());
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < T; ++j)
      for (int k = 0; k < K; ++k) {
        const Index c = dims.cell(i, j, k);
        const double e = d.population(c) * sim.rates(k);
        sim.expected(c) = e;
        const double mean = e * std::exp(linear_predictor(spec, x, i, j, k));
        std::poisson_distribution<long long> pois(mean);
        d.observed(c) = mean > 0.0 ? static_cast<double>(pois(rng)) : 0.0;
      }
  return sim;
}

Dataset make_proportionality_violation(const Dataset& d, double strength, std::uint64_t seed) {
  if (!(strength >= 0.0) || !std::isfinite(strength))
    throw Error(ErrorKind::InvalidInput, "crossover strength must be >= 0");
  validate(d);
  const Dims dims = d.dims();
  const VectorXd q = stratum_rates(d);
  // z_k in [0, 1] by rank of the stratum rate
  std::vector<int> order(static_cast<std::size_t>(dims.K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return q(a) < q(b); });
  VectorXd z = VectorXd::Zero(dims.K);
  for (int r = 0; r < dims.K; ++r)
    z(order[static_cast<std::size_t>(r)]) = dims.K > 1 ? static_cast<double>(r) / (dims.K - 1) : 0.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Dataset out = d;
  for (int i = 0; i < dims.S; ++i) {
    const double gi = unif(rng);
    // the highest-risk stratum keeps a fraction exp(-strength * g_i)
    const VectorXd m = (-strength * gi * z.array()).exp().matrix();
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        // one uniform per event, consumed whatever the strength, so counts
        // shrink monotonically as the strength grows
        const Index c = dims.cell(i, j, k);
        const auto n = static_cast<long long>(d.observed(c));
        long long kept = 0;
        for (long long e = 0; e < n; ++e) kept += u01(rng) < m(k);
        out.observed(c) = static_cast<double>(kept);
      }
  }
  return out;
}

std::string truth_to_json(const Simulation& sim) {
  nlohmann::ordered_json j;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["spec"] = to_string(sim.spec);
  j["alpha"] = sim.truth.alpha;
  nlohmann::ordered_json h;
  h["tau_phi"] = sim.hyper.tau_phi;
  h["lambda_phi"] = sim.hyper.lambda_phi;
  auto opt = [&](const char* name, const std::optional<double>& v) {
    if (v) h[name] = *v;
  };
  opt("tau_delta", sim.hyper.tau_delta);
  opt("tau_gamma", sim.hyper.tau_gamma);
  opt("tau_zeta1", sim.hyper.tau_zeta1);
  opt("tau_zeta2", sim.hyper.tau_zeta2);
  opt("tau_zeta3", sim.hyper.tau_zeta3);
  j["hyperparameters"] = h;
  j["rates"] = vec(sim.rates);
  nlohmann::ordered_json b;
  b["phi"] = vec(sim.truth.phi);
  auto blk = [&](const char* name, const std::optional<VectorXd>& v) {
    if (v) b[name] = vec(*v);
  };
  blk("delta", sim.truth.delta);
  blk("gamma", sim.truth.gamma);
  blk("zeta1", sim.truth.zeta1);
  blk("zeta2", sim.truth.zeta2);
  blk("zeta3", sim.truth.zeta3);
  j["blocks"] = b;
  return j.dump(2) + "\n";
}

}  // namespace stam
