#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stam/graph.hpp"
#include "stam/types.hpp"

namespace stam {

/// Lattice extents. Cells are ordered area-major: (i * T + j) * K + k.
struct Dims {
  int S = 0;
  int T = 0;
  int K = 0;

  Index n_cells() const { return static_cast<Index>(S) * T * K; }
  Index cell(int i, int j, int k) const {
    return (static_cast<Index>(i) * T + j) * K + k;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Observed counts and populations at risk on the full S x T x K lattice.
struct Dataset {
  std::vector<std::string> area_ids;
  std::vector<std::string> period_labels;
  std::vector<std::string> age_labels;
  VectorXd observed;    // non-negative integers
  VectorXd population;  // non-negative

  Dims dims() const {
    return {static_cast<int>(area_ids.size()), static_cast<int>(period_labels.size()),
            static_cast<int>(age_labels.size())};
  }
  double O(int i, int j, int k) const { return observed(dims().cell(i, j, k)); }
  double N(int i, int j, int k) const { return population(dims().cell(i, j, k)); }

};

bool operator==(const Dataset& a, const Dataset& b);

/// Throws InvalidInput on negative or non-integral counts, or O > 0 with N = 0.
void validate(const Dataset& d);

/// CSV with header `area_id,period,age_group,observed,population`. Label
/// order is order of first appearance; every lattice cell exactly once.
Dataset parse_dataset_csv(std::string_view text);
Dataset read_dataset_csv(const std::string& path);
std::string format_dataset_csv(const Dataset& d);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// Reorders areas to the graph's row order; throws when the label sets differ.
Dataset align_to_graph(const Dataset& d, const SpatialGraph& g);

}  // namespace stam
