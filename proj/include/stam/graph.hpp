#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stam/types.hpp"

namespace stam {

/// Undirected neighbourhood graph over the study areas.
///
/// Row order of every spatial matrix is the order of `area_ids`, which is the
/// file order of the adjacency records. Edges are stored once, as (a, b) with
/// a < b, sorted.
struct SpatialGraph {
  std::vector<std::string> area_ids;
  std::vector<std::pair<int, int>> edges;

  int n_areas() const { return static_cast<int>(area_ids.size()); }
  std::vector<std::vector<int>> neighbours() const;
  int index_of(std::string_view id) const;  // -1 when absent
};

/// Builds a graph from labels and undirected edges (either orientation,
/// duplicates merged). Throws on self-loops or out-of-range endpoints.
SpatialGraph make_graph(std::vector<std::string> area_ids,
                        const std::vector<std::pair<int, int>>& edges);

/// Parses the `<area_id>: <id> <id> ...` adjacency format. Listings are
/// symmetrized, so "A: B" alone yields the edge A-B.
SpatialGraph parse_adjacency(std::string_view text);
SpatialGraph read_adjacency_file(const std::string& path);
std::string format_adjacency(const SpatialGraph& g);

/// R = D - W, with declared rank deficiency equal to the component count.
StructureMatrix icar_structure(const SpatialGraph& g);

/// Components in order of their smallest member; members sorted.
std::vector<std::vector<int>> connected_components(const SpatialGraph& g);

/// Rook-adjacency lattice, row-major area order, labels "r<row>c<col>".
SpatialGraph grid_graph(int rows, int cols);
SpatialGraph path_graph(int n);

}  // namespace stam
