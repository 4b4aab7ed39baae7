#pragma once

#include "latent_model.hpp"
#include "stam/inference.hpp"

namespace stam::detail {

/// Fills summaries, WAIC and the constraint residual of `out` from latent
/// draws (rows) and internal-scale hyperparameter draws (rows).
void summarize_draws(const LatentModel& model, const Dataset& d, const MatrixXd& latent,
                     const MatrixXd& theta, FitResult& out);

double logistic(double v);

}  // namespace stam::detail
