#pragma once

#include <cstdint>
#include <string>

#include "stam/dataset.hpp"
#include "stam/graph.hpp"
#include "stam/model.hpp"

namespace stam {

enum class PopulationPolicy { Constant, AgePyramid };
std::string to_string(PopulationPolicy p);
PopulationPolicy parse_population_policy(std::string_view s);

struct Populations {
  PopulationPolicy policy = PopulationPolicy::Constant;
  double per_cell = 1e4;  // mean population of a cell
};

/// Reference rates rising log-linearly from 5e-4 to 5e-3 over K strata.
VectorXd designated_rates(int K);

/// N for every cell; the age pyramid scales linearly from 1.5 (youngest)
/// to 0.5 (oldest) around `per_cell`.
VectorXd make_populations(const Populations& pop, int S, int T, int K);

struct Simulation {
  Dataset data;
  VectorXd expected;  // N * designated rates
  VectorXd rates;
  LatentState truth;
  Hyperparameters hyper;
  ModelSpec spec;
};

/// Draws each latent block from its constrained prior, then
/// O ~ Poisson(E exp(eta)). Labels: areas from the graph, periods
/// "p1".."pT", strata "g1".."gK".
Simulation simulate_dataset(const SpatialGraph& g, int T, int K, const ModelSpec& spec,
                            const Hyperparameters& hyper, double alpha,
                            const Populations& pop, std::uint64_t seed);

/// Thins counts with area-dependent age gradients so that stratum rates
/// stop being proportional to the reference rates: in area i the stratum of
/// rank r among K keeps a fraction exp(-strength * g_i * r / (K - 1)),
/// g_i ~ U(0.5, 1.5). Strength 0 returns the counts unchanged. Flag rates
/// peak near strength 2; far beyond it the common part of the gradient is
/// absorbed by internally estimated reference rates.
Dataset make_proportionality_violation(const Dataset& d, double crossover_strength,
                                       std::uint64_t seed);

std::string truth_to_json(const Simulation& sim);

}  // namespace stam
