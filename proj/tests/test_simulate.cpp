#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "stam/error.hpp"
#include "stam/gmrf.hpp"
#include "stam/graph.hpp"
#include "stam/simulate.hpp"
#include "stam/standardize.hpp"

using namespace stam;

namespace {

const ModelSpec kModel7 = parse_spec("delta=rw1;gamma=rw1;z1=II;z2=II;z3=-");

double max_violation(const Simulation& sim, const SpatialGraph& g, int T, int K) {
  const auto cons = constraint_set(sim.spec, g.n_areas(), T, K, connected_components(g));
  double worst = (cons.at("phi").rows * sim.truth.phi).cwiseAbs().maxCoeff();
  auto check = [&](const char* name, const std::optional<VectorXd>& v) {
    if (!v || !cons.count(name) || cons.at(name).n_rows() == 0) return;
    worst = std::max(worst, (cons.at(name).rows * *v).cwiseAbs().maxCoeff());
  };
  check("delta", sim.truth.delta);
  check("gamma", sim.truth.gamma);
  check("zeta1", sim.truth.zeta1);
  check("zeta2", sim.truth.zeta2);
  check("zeta3", sim.truth.zeta3);
  return worst;
}

}  // namespace

TEST_CASE("designated rates and populations") {
  const VectorXd q = designated_rates(16);
  CHECK(q(0) == doctest::Approx(5e-4));
  CHECK(q(15) == doctest::Approx(5e-3));
  CHECK(q(8) / q(7) == doctest::Approx(q(1) / q(0)));
  CHECK(designated_rates(1)(0) == doctest::Approx(5e-4));

  const VectorXd flat = make_populations({}, 2, 3, 4);
  CHECK(flat.size() == 24);
  CHECK((flat.array() == 1e4).all());
  const VectorXd pyr = make_populations({PopulationPolicy::AgePyramid, 1000.0}, 1, 1, 3);
  CHECK(pyr(0) == 1500.0);
  CHECK(pyr(1) == 1000.0);
  CHECK(pyr(2) == 500.0);
  CHECK_THROWS_AS(make_populations({PopulationPolicy::Constant, 0.0}, 1, 1, 1), Error);
  CHECK(parse_population_policy("pyramid") == PopulationPolicy::AgePyramid);
  CHECK_THROWS_AS(parse_population_policy("census"), Error);
}

TEST_CASE("simulate_dataset: dimensions, labels, determinism") {
  const SpatialGraph g = grid_graph(10, 10);
  const Hyperparameters h = default_hyperparameters(kModel7, 25.0);
  const Simulation a = simulate_dataset(g, 7, 16, kModel7, h, -0.75, {}, 42);
  const Simulation b = simulate_dataset(g, 7, 16, kModel7, h, -0.75, {}, 42);
  const Simulation c = simulate_dataset(g, 7, 16, kModel7, h, -0.75, {}, 43);
  CHECK(a.data.observed.size() == 11200);
  CHECK(a.data.period_labels.back() == "p7");
  CHECK(a.data.age_labels.front() == "g1");
  CHECK(a.data == b.data);
  CHECK(a.truth.phi == b.truth.phi);
  CHECK_FALSE(a.data == c.data);
  CHECK(parse_dataset_csv(format_dataset_csv(a.data)) == a.data);
  CHECK(truth_to_json(a) == truth_to_json(b));
  CHECK_FALSE(a.truth.zeta3.has_value());
}

TEST_CASE("degenerate prior gives effects near zero and O ~ Poisson(E exp(alpha))") {
  const SpatialGraph g = grid_graph(4, 4);
  const Simulation s = simulate_dataset(g, 5, 6, kModel7, default_hyperparameters(kModel7, 1e12), -0.75, {}, 3);
  CHECK(s.truth.phi.cwiseAbs().maxCoeff() < 1e-4);
  CHECK(s.truth.delta->cwiseAbs().maxCoeff() < 1e-4);
  CHECK(s.truth.zeta1->cwiseAbs().maxCoeff() < 1e-4);
  CHECK(s.truth.zeta2->cwiseAbs().maxCoeff() < 1e-4);
  // total count is Poisson with mean sum(E) exp(alpha): within 4 sd
  const double mean = s.expected.sum() * std::exp(-0.75);
  CHECK(std::abs(s.data.observed.sum() - mean) < 4.0 * std::sqrt(mean));
}

TEST_CASE("simulated blocks satisfy their constraints") {
  const SpatialGraph g = parse_adjacency("a: b\nb: c\nc:\nd: e\ne:\n");  // two components
  for (const char* text : {"delta=rw1;gamma=rw1;z1=IV;z2=III;z3=II", "delta=iid;gamma=rw1;z1=II;z2=IV;z3=IV",
                           "delta=rw1;gamma=iid;z1=I;z2=II;z3=III"}) {
    const ModelSpec spec = parse_spec(text);
    const Simulation s = simulate_dataset(g, 4, 3, spec, default_hyperparameters(spec, 2.0), 0.0, {}, 11);
    CHECK(max_violation(s, g, 4, 3) < 1e-8);
  }
}

TEST_CASE("iid block variance matches 1/tau") {
  const ModelSpec spec = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  Hyperparameters h = default_hyperparameters(spec, 1.0);
  h.tau_delta = 4.0;
  const Simulation s = simulate_dataset(path_graph(2), 2000, 2, spec, h, 0.0, {}, 5);
  const VectorXd& d = *s.truth.delta;
  const double var = (d.array() - d.mean()).square().sum() / static_cast<double>(d.size() - 1);
  CHECK(std::abs(var / 0.25 - 1.0) < 0.1);
}

TEST_CASE("global SIR on the 10x10, T=7, K=16 design") {
  // effect sds of 0.05; larger ones inflate the mean of exp(eta) beyond exp(alpha)
  const SpatialGraph g = grid_graph(10, 10);
  const Hyperparameters h = default_hyperparameters(kModel7, 400.0);
  int inside = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const Simulation s = simulate_dataset(g, 7, 16, kModel7, h, -0.75, {}, 1000 + r);
    const double ratio = s.data.observed.sum() / s.expected.sum() / std::exp(-0.75);
    inside += ratio >= 0.9 && ratio <= 1.1;
  }
  CHECK(inside >= 95);
}

TEST_CASE("make_proportionality_violation") {
  const ModelSpec spec = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  const Simulation s =
      simulate_dataset(grid_graph(3, 3), 3, 6, spec, default_hyperparameters(spec, 1e4), -0.75, {}, 9);
  CHECK(make_proportionality_violation(s.data, 0.0, 1) == s.data);
  CHECK_THROWS_AS(make_proportionality_violation(s.data, -1.0, 1), Error);
  const Dataset v1 = make_proportionality_violation(s.data, 1.0, 1);
  const Dataset v2 = make_proportionality_violation(s.data, 2.0, 1);
  CHECK(v1 == make_proportionality_violation(s.data, 1.0, 1));
  // thinning only removes events, and more of them as the strength grows
  CHECK((v1.observed.array() <= s.data.observed.array()).all());
  CHECK((v2.observed.array() <= v1.observed.array()).all());
  CHECK(v2.population == s.data.population);
}

TEST_CASE("truth JSON layout") {
  const Simulation s = simulate_dataset(grid_graph(2, 2), 3, 2, kModel7, default_hyperparameters(kModel7, 4.0),
                                        -0.5, {}, 1);
  const auto j = nlohmann::ordered_json::parse(truth_to_json(s));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"spec", "alpha", "hyperparameters", "rates", "blocks"});
  CHECK(j["alpha"].get<double>() == -0.5);
  CHECK(j["blocks"]["zeta1"].size() == 12u);
  CHECK_FALSE(j["blocks"].contains("zeta3"));
  CHECK(j["hyperparameters"]["tau_zeta2"].get<double>() == 4.0);
}
