#include "stam/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "stam/error.hpp"

namespace stam {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto b = s.find_first_not_of(" \t\r", pos);
    if (b == std::string_view::npos) break;
    auto e = s.find_first_of(" \t\r", b);
    if (e == std::string_view::npos) e = s.size();
    out.push_back(s.substr(b, e - b));
    pos = e;
  }
  return out;
}

[[noreturn]] void fail_at(int line, const std::string& msg) {
  throw Error(ErrorKind::InvalidInput,
              "adjacency line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::vector<std::vector<int>> SpatialGraph::neighbours() const {
  std::vector<std::vector<int>> nb(area_ids.size());
  for (const auto& [a, b] : edges) {
    nb[a].push_back(b);
    nb[b].push_back(a);
  }
  for (auto& v : nb) std::sort(v.begin(), v.end());
  return nb;
}

int SpatialGraph::index_of(std::string_view id) const {
  const auto it = std::find(area_ids.begin(), area_ids.end(), id);
  return it == area_ids.end() ? -1 : static_cast<int>(it - area_ids.begin());
}

SpatialGraph make_graph(std::vector<std::string> area_ids,
                        const std::vector<std::pair<int, int>>& edges) {
  const int n = static_cast<int>(area_ids.size());
  std::set<std::string> seen;
  for (const auto& id : area_ids) {
    if (!seen.insert(id).second)
      throw Error(ErrorKind::InvalidInput, "duplicate area id '" + id + "'");
  }
  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw Error(ErrorKind::InvalidInput, "edge endpoint out of range");
    if (a == b)
      throw Error(ErrorKind::InvalidInput,
                  "self-loop on area '" + area_ids[a] + "'");
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  SpatialGraph g;
  g.area_ids = std::move(area_ids);
  g.edges.assign(unique.begin(), unique.end());
  return g;
}

SpatialGraph parse_adjacency(std::string_view text) {
  struct Record {
    int line;
    std::string id;
    std::vector<std::string_view> neighbours;
  };
  std::vector<Record> records;
  std::unordered_map<std::string, int> index;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) fail_at(line_no, "missing ':'");
    const auto id = trim(line.substr(0, colon));
    if (id.empty() || split_ws(id).size() != 1)
      fail_at(line_no, "malformed area id");
    std::string key(id);
    if (index.count(key)) fail_at(line_no, "duplicate area record '" + key + "'");
    index.emplace(key, static_cast<int>(records.size()));
    records.push_back({line_no, std::move(key), split_ws(line.substr(colon + 1))});
  }

  std::vector<std::string> ids;
  std::vector<std::pair<int, int>> edges;
  ids.reserve(records.size());
  for (std::size_t a = 0; a < records.size(); ++a) {
    const auto& rec = records[a];
    ids.push_back(rec.id);
    for (auto nb : rec.neighbours) {
      const auto it = index.find(std::string(nb));
      if (it == index.end())
        fail_at(rec.line, "unknown neighbour '" + std::string(nb) + "'");
      if (it->second == static_cast<int>(a))
        fail_at(rec.line, "self-loop on '" + rec.id + "'");
      edges.emplace_back(static_cast<int>(a), it->second);
    }
  }
  return make_graph(std::move(ids), edges);
}

SpatialGraph read_adjacency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_adjacency(ss.str());
}

std::string format_adjacency(const SpatialGraph& g) {
  const auto nb = g.neighbours();
  std::string out;
  for (int a = 0; a < g.n_areas(); ++a) {
    out += g.area_ids[a] + ":";
    for (int b : nb[a]) out += " " + g.area_ids[b];
    out += "\n";
  }
  return out;
}

StructureMatrix icar_structure(const SpatialGraph& g) {
  const int n = g.n_areas();
  std::vector<Triplet> trips;
  std::vector<double> degree(n, 0.0);
  for (const auto& [a, b] : g.edges) {
    trips.emplace_back(a, b, -1.0);
    trips.emplace_back(b, a, -1.0);
    degree[a] += 1.0;
    degree[b] += 1.0;
  }
  for (int a = 0; a < n; ++a) trips.emplace_back(a, a, degree[a]);
  StructureMatrix r;
  r.entries.resize(n, n);
  r.entries.setFromTriplets(trips.begin(), trips.end());
  r.rank_deficiency = static_cast<int>(connected_components(g).size());
  return r;
}

std::vector<std::vector<int>> connected_components(const SpatialGraph& g) {
  const int n = g.n_areas();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& [a, b] : g.edges) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::vector<int>> comps;
  std::vector<int> slot(n, -1);
  for (int v = 0; v < n; ++v) {
    const int r = find(v);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(comps.size());
      comps.emplace_back();
    }
    comps[slot[r]].push_back(v);
  }
  return comps;
}

SpatialGraph grid_graph(int rows, int cols) {
  if (rows < 1 || cols < 1)
    throw Error(ErrorKind::InvalidDimension, "grid needs positive dimensions");
  std::vector<std::string> ids;
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      ids.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
      const int v = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(v, v + 1);
      if (r + 1 < rows) edges.emplace_back(v, v + cols);
    }
  }
  return make_graph(std::move(ids), edges);
}

SpatialGraph path_graph(int n) {
  std::vector<std::string> ids;
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < n; ++v) {
    ids.push_back("a" + std::to_string(v));
    if (v + 1 < n) edges.emplace_back(v, v + 1);
  }
  return make_graph(std::move(ids), edges);
}

}  // namespace stam
