#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "stam/dataset.hpp"
#include "stam/model_spec.hpp"
#include "stam/types.hpp"

namespace stam {

/// All 520 specs, group by group in the published table order: phi+delta,
/// phi+gamma, phi+delta+gamma, phi+delta+z1, phi+delta+gamma+z1, phi+gamma+z2,
/// phi+delta+gamma+z2, phi+delta+gamma+z3, the three two-interaction groups,
/// then all three interactions.
std::vector<ModelSpec> enumerate_models();

/// Index of the enumeration group above (0..11).
int enumeration_group(const ModelSpec& spec);
inline constexpr std::array<int, 12> kGroupSizes = {2, 2, 4, 8, 16, 8, 16, 16, 64, 64, 64, 256};

enum class Block { Alpha, Phi, Delta, Gamma, Zeta1, Zeta2, Zeta3 };
std::string block_name(Block b);

struct BlockSlice {
  Block block;
  Index offset;
  Index size;
};

/// Position of every latent block inside the flat latent vector
/// [alpha, phi, delta, gamma, zeta1, zeta2, zeta3] (absent blocks skipped).
/// Interaction vectorization: zeta1 i*T+j, zeta2 i*K+k, zeta3 k*T+j.
class LatentLayout {
 public:
  LatentLayout(const ModelSpec& spec, Dims dims);

  Index dim() const { return dim_; }
  const std::vector<BlockSlice>& blocks() const { return blocks_; }
  std::optional<BlockSlice> find(Block b) const;
  const ModelSpec& spec() const { return spec_; }
  const Dims& dims() const { return dims_; }

  /// Flat indices touched by cell (i, j, k), alpha first.
  int cell_indices(int i, int j, int k, std::array<Index, 7>& out) const;

 private:
  ModelSpec spec_;
  Dims dims_;
  Index dim_ = 0;
  std::vector<BlockSlice> blocks_;
  std::array<Index, 7> offset_{};  // -1 when absent
};

struct LatentState {
  double alpha = 0.0;
  VectorXd phi;
  std::optional<VectorXd> delta, gamma, zeta1, zeta2, zeta3;
};

VectorXd flatten(const LatentLayout& layout, const LatentState& x);
LatentState unflatten(const LatentLayout& layout, const VectorXd& flat);

/// alpha + phi_i + delta_j + gamma_k + zeta1_ij + zeta2_ik + zeta3_jk over the
/// blocks present in `spec`; throws SpecificationMismatch if one is missing.
double linear_predictor(const ModelSpec& spec, const LatentState& x, int i, int j, int k);

/// Predictor of every cell from a flat latent vector, cell-indexed.
VectorXd linear_predictor_all(const LatentLayout& layout, const VectorXd& flat);

struct LogLikelihood {
  double total = 0.0;
  VectorXd pointwise;  // cell-indexed; zero for cells with E = 0
};

/// Poisson log-likelihood sum O (log E + eta) - E exp(eta) - log Gamma(O + 1).
LogLikelihood poisson_loglik(const Dataset& d, const VectorXd& expected, const ModelSpec& spec,
                             const LatentState& x);
LogLikelihood poisson_loglik(const VectorXd& observed, const VectorXd& expected,
                             const VectorXd& eta);
/// Throws ImpossibleCell when O > 0 where E = 0.
void check_expected(const Dataset& d, const VectorXd& expected);

struct Hyperparameters {
  double tau_phi = 1.0;
  double lambda_phi = 0.5;
  std::optional<double> tau_delta, tau_gamma, tau_zeta1, tau_zeta2, tau_zeta3;
};

void validate(const Hyperparameters& h);

/// Hyperparameters present for `spec`, all precisions `tau`.
Hyperparameters default_hyperparameters(const ModelSpec& spec, double tau = 1.0,
                                        double lambda = 0.5);

enum class PriorFamily { PC, NonInformative };
std::string to_string(PriorFamily f);
PriorFamily parse_prior_family(std::string_view s);

/// Exponential rate on sigma with P(sigma > u) = tail.
double pc_rate(double u = 1.0, double tail = 0.01);

/// Log density of sigma itself (no Jacobian): PC is exponential, the
/// non-informative prior is flat.
double log_prior_sigma(double sigma, PriorFamily family);

/// Joint log hyperprior on the internal scale (log tau, logit lambda),
/// Jacobians included.
double log_hyperprior(const Hyperparameters& h, PriorFamily family);

/// Internal unconstrained coordinates: log tau for phi, delta, gamma, zeta1,
/// zeta2, zeta3 (those present), then logit lambda.
struct HyperLayout {
  std::vector<Block> precisions;

  explicit HyperLayout(const ModelSpec& spec);
  Index size() const { return static_cast<Index>(precisions.size()) + 1; }
  Index lambda_index() const { return static_cast<Index>(precisions.size()); }
  std::vector<std::string> names() const;  // "sigma_phi", ..., "lambda_phi"

  VectorXd to_internal(const Hyperparameters& h) const;
  Hyperparameters from_internal(const VectorXd& theta) const;
  double tau(const VectorXd& theta, Block b) const;
};

}  // namespace stam
