#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stam/inference.hpp"

namespace stam {

struct SearchRow {
  std::string spec;
  double waic = 0.0;
  double p_eff = 0.0;
  bool converged = false;
  double seconds = 0.0;
};

/// Field-wise equality; NaN values compare equal to each other.
bool operator==(const SearchRow& a, const SearchRow& b);

struct FamilyBest {
  int family = 0;
  std::string label;
  std::optional<SearchRow> best;  // empty when no fit of the family converged
};

struct SearchReport {
  std::vector<SearchRow> rows;  // input order
  std::vector<FamilyBest> best_per_family;
  std::string overall_best;
};

struct SearchOptions {
  FitOptions fit;  // template; the seed is replaced per spec
  int jobs = 1;
  std::uint64_t seed = 1;
  /// Results CSV appended after every fit; with `resume`, specs already in
  /// it are not refit.
  std::string checkpoint_path;
  bool resume = false;
  std::function<void(const SearchRow&)> on_row;
};

/// Seed of one spec's fit, a function of the master seed and the spec text.
std::uint64_t derive_seed(std::uint64_t master, const std::string& spec);

SearchReport run_search(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                        const std::vector<ModelSpec>& specs, const SearchOptions& opts);

/// Family minima over converged rows (ties go to the earlier row) and the
/// overall argmin.
SearchReport make_report(std::vector<SearchRow> rows);

/// `spec,waic,p_eff,converged,seconds`
std::string format_results_csv(const std::vector<SearchRow>& rows);
std::string format_result_row(const SearchRow& row);
std::vector<SearchRow> parse_results_csv(std::string_view text);

/// `family,delta,gamma,z1,z2,z3,spec,waic`, one row per family.
std::string format_summary_csv(const SearchReport& r);

}  // namespace stam
