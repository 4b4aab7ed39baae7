#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stam/dataset.hpp"
#include "stam/graph.hpp"
#include "stam/model.hpp"
#include "stam/summary.hpp"

namespace stam {

struct FitOptions {
  PriorFamily prior = PriorFamily::PC;
  std::uint64_t seed = 1;
  int n_draws = 1000;
  /// Mix Gaussians over a central-composite design around the hyper mode.
  bool ccd = true;
  /// Skip the hyperparameter search and condition on these values.
  std::optional<Hyperparameters> fixed_hyper;
  int max_newton_iterations = 100;
  double gradient_tolerance = 1e-6;
  int max_outer_evaluations = 0;  // 0: 150 per hyperparameter
  bool keep_draws = false;
};

struct McmcOptions {
  PriorFamily prior = PriorFamily::PC;
  std::uint64_t seed = 1;
  int iterations = 20000;
  int burn_in = -1;       // -1: a quarter of the iterations
  int max_kept = 4000;    // thinning keeps at most this many draws
  bool likelihood = true; // false samples the constrained prior (alpha fixed at 0)
  std::optional<Hyperparameters> fixed_hyper;
  /// Update all latent blocks jointly instead of block by block.
  bool joint_latent = false;
  bool keep_draws = false;
};

struct FitDiagnostics {
  std::string method;
  bool converged = false;        // inner mode found at every hyper point used
  bool outer_converged = false;  // hyperparameter search met its tolerance
  int newton_iterations = 0;     // at the hyper mode
  int outer_evaluations = 0;
  int mixture_components = 1;
  double log_marginal = 0.0;
  double max_gradient = 0.0;
  double constraint_residual = 0.0;  // max over the mode and every draw
  int iterations = 0;                // MCMC only
  double latent_acceptance = 0.0;    // MCMC only
  std::vector<double> hyper_acceptance;
  std::string message;
};

struct NamedSummary {
  std::string name;
  SummaryStats stats;
};

struct BlockSummary {
  Block block;
  VectorXd mean;
  VectorXd sd;
};

struct FitResult {
  ModelSpec spec;
  PriorFamily prior = PriorFamily::PC;
  std::vector<std::string> area_ids, period_labels, age_labels;
  SummaryStats alpha;
  /// sigma_* (standard deviations) then lambda_phi.
  std::vector<NamedSummary> hyper_summary;
  VectorXd hyper_mode;  // internal scale (log tau, logit lambda)
  std::vector<BlockSummary> latent_summary;  // alpha included
  double waic = 0.0;
  double p_eff = 0.0;
  double lppd = 0.0;
  FitDiagnostics diagnostics;
  MatrixXd draws;  // latent draws (rows) when requested

  const BlockSummary& block(Block b) const;
  bool has_block(Block b) const;
};

/// Laplace approximation under hard sum-to-zero constraints. The dataset
/// areas must follow the graph's row order.
FitResult fit_laplace(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                      const ModelSpec& spec, const FitOptions& opts = {});

/// Metropolis-within-Gibbs reference sampler for small instances.
FitResult fit_mcmc(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                   const ModelSpec& spec, const McmcOptions& opts = {});

/// Long-format effect table: key columns then mean, sd, exp_mean.
struct EffectTable {
  std::string name;  // spatial, temporal, age, space_time, space_age, time_age
  std::vector<std::string> key_columns;
  std::vector<std::vector<std::string>> keys;
  VectorXd mean;
  VectorXd sd;
};

std::vector<EffectTable> export_effects(const FitResult& fit);
std::string format_effect_csv(const EffectTable& t);

/// JSON document with keys in a fixed order and no timestamps.
std::string fit_to_json(const FitResult& fit);

}  // namespace stam
