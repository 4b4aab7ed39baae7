#pragma once

#include <optional>
#include <vector>

#include "stam/dataset.hpp"

namespace stam {

/// q_k = sum_ij O_ijk / sum_ij N_ijk (internal reference rates).
VectorXd stratum_rates(const Dataset& d);

struct StandardizationResult {
  VectorXd q;
  VectorXd expected;                         // E_ijk, cell-indexed
  MatrixXd expected_collapsed;               // E_ij, S x T
  std::vector<std::optional<double>> sir;    // O_ij / E_ij at i * T + j

  std::optional<double> sir_at(int i, int j) const {
    return sir[static_cast<std::size_t>(i * expected_collapsed.cols() + j)];
  }
};

/// E_ijk = N_ijk q_k.
StandardizationResult expected_counts(const Dataset& d, const VectorXd& q);

/// E_ijk = N_ijk * (sum O / sum N): raw-population expected counts.
VectorXd global_rate_expected(const Dataset& d);

struct ProportionalityOptions {
  int min_points = 3;
  double r2_threshold = 0.5;
};

struct ProportionalityPoint {
  int i, j, k;
  double q;
  double rate;
};

/// Through-origin fit rate = slope * q for one area-period.
struct CellDiagnostic {
  int i = 0, j = 0;
  int n_points = 0;
  bool assessed = false;
  double slope = 0.0;
  double r2 = 0.0;
  bool flag = false;
};

struct ProportionalityReport {
  std::vector<ProportionalityPoint> points;
  std::vector<CellDiagnostic> cells;  // i * T + j

  int n_assessed() const;
  int n_flagged() const;
  double flagged_fraction() const;  // flagged / assessed
};

/// Least-squares slope through the origin and its coefficient of
/// determination 1 - SS_res / SS_tot (SS_tot centred on the mean rate).
/// With SS_tot = 0 the fit scores 1 when exact and 0 otherwise.
CellDiagnostic fit_through_origin(const std::vector<double>& q, const std::vector<double>& rate);

ProportionalityReport proportionality_check(const Dataset& d, const VectorXd& q,
                                            const ProportionalityOptions& opts = {});

std::string format_report_csv(const Dataset& d, const ProportionalityReport& r);
std::string format_points_csv(const Dataset& d, const ProportionalityReport& r);

}  // namespace stam
