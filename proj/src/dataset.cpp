#include "stam/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "stam/error.hpp"

namespace stam {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto end = line.find(',', pos);
    auto field = line.substr(pos, end == std::string_view::npos ? line.size() - pos : end - pos);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

[[noreturn]] void fail_line(int line, const std::string& msg) {
  throw Error(ErrorKind::InvalidInput, "dataset line " + std::to_string(line) + ": " + msg);
}

double parse_number(std::string_view s, int line, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    fail_line(line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct LabelIndex {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;

  int get(std::string_view s) {
    std::string key(s);
    const auto it = index.find(key);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(labels.size());
    index.emplace(key, id);
    labels.push_back(std::move(key));
    return id;
  }
};

}  // namespace

bool operator==(const Dataset& a, const Dataset& b) {
  return a.area_ids == b.area_ids && a.period_labels == b.period_labels &&
         a.age_labels == b.age_labels && a.observed.size() == b.observed.size() &&
         a.population.size() == b.population.size() && a.observed == b.observed &&
         a.population == b.population;
}

void validate(const Dataset& d) {
  const Dims dims = d.dims();
  if (dims.S < 1 || dims.T < 1 || dims.K < 1)
    throw Error(ErrorKind::InvalidInput, "dataset has an empty dimension");
  if (d.observed.size() != dims.n_cells() || d.population.size() != dims.n_cells())
    throw Error(ErrorKind::InvalidInput, "dataset arrays do not cover the lattice");
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        const double o = d.O(i, j, k), n = d.N(i, j, k);
        const std::string where = "(" + d.area_ids[i] + "," + d.period_labels[j] + "," +
                                  d.age_labels[k] + ")";
        if (!(o >= 0.0) || o != std::floor(o))
          throw Error(ErrorKind::InvalidInput, "observed count at " + where +
                                                   " is not a non-negative integer");
        if (!(n >= 0.0)) throw Error(ErrorKind::InvalidInput, "negative population at " + where);
        if (o > 0.0 && n == 0.0)
          throw Error(ErrorKind::InvalidInput, "positive count with zero population at " + where);
      }
}

Dataset parse_dataset_csv(std::string_view text) {
  static const char* kColumns[] = {"area_id", "period", "age_group", "observed", "population"};
  struct Row {
    int line, i, j, k;
    double o, n;
  };
  LabelIndex areas, periods, ages;
  std::vector<Row> rows;
  int col[5] = {-1, -1, -1, -1, -1};
  std::size_t n_fields = 0;
  bool header_seen = false;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto fields = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      n_fields = fields.size();
      for (std::size_t f = 0; f < fields.size(); ++f)
        for (int c = 0; c < 5; ++c)
          if (fields[f] == kColumns[c]) col[c] = static_cast<int>(f);
      for (int c = 0; c < 5; ++c)
        if (col[c] < 0) fail_line(line_no, std::string("missing column '") + kColumns[c] + "'");
      continue;
    }
    if (fields.size() != n_fields)
      fail_line(line_no, "expected " + std::to_string(n_fields) + " fields, found " +
                             std::to_string(fields.size()));
    Row r{line_no,
          areas.get(fields[col[0]]),
          periods.get(fields[col[1]]),
          ages.get(fields[col[2]]),
          parse_number(fields[col[3]], line_no, "observed count"),
          parse_number(fields[col[4]], line_no, "population")};
    if (r.o < 0.0 || r.o != std::floor(r.o))
      fail_line(line_no, "observed count must be a non-negative integer");
    if (r.n < 0.0) fail_line(line_no, "population must be non-negative");
    rows.push_back(r);
  }
  if (!header_seen) throw Error(ErrorKind::InvalidInput, "dataset is empty");

  Dataset d;
  d.area_ids = areas.labels;
  d.period_labels = periods.labels;
  d.age_labels = ages.labels;
  const Dims dims = d.dims();
  d.observed = VectorXd::Zero(dims.n_cells());
  d.population = VectorXd::Zero(dims.n_cells());
  std::vector<char> filled(static_cast<std::size_t>(dims.n_cells()), 0);
  for (const auto& r : rows) {
    const Index c = dims.cell(r.i, r.j, r.k);
    if (filled[c]) fail_line(r.line, "duplicate lattice cell");
    filled[c] = 1;
    d.observed(c) = r.o;
    d.population(c) = r.n;
  }
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k)
        if (!filled[dims.cell(i, j, k)])
          throw Error(ErrorKind::InvalidInput, "missing lattice cell (" + d.area_ids[i] + "," +
                                                   d.period_labels[j] + "," + d.age_labels[k] +
                                                   ")");
  validate(d);
  return d;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path);
  out << text;
}

Dataset read_dataset_csv(const std::string& path) {
  return parse_dataset_csv(read_text_file(path));
}

std::string format_dataset_csv(const Dataset& d) {
  std::string out = "area_id,period,age_group,observed,population\n";
  const Dims dims = d.dims();
  for (int i = 0; i < dims.S; ++i)
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        out += d.area_ids[i] + "," + d.period_labels[j] + "," + d.age_labels[k] + ",";
        out += format_number(d.O(i, j, k)) + "," + format_number(d.N(i, j, k)) + "\n";
      }
  return out;
}

Dataset align_to_graph(const Dataset& d, const SpatialGraph& g) {
  const Dims dims = d.dims();
  if (g.n_areas() != dims.S)
    throw Error(ErrorKind::InvalidInput, "dataset has " + std::to_string(dims.S) +
                                             " areas but the adjacency graph has " +
                                             std::to_string(g.n_areas()));
  std::unordered_map<std::string, int> pos;
  for (int i = 0; i < dims.S; ++i) pos.emplace(d.area_ids[i], i);
  Dataset out = d;
  out.area_ids = g.area_ids;
  for (int gi = 0; gi < dims.S; ++gi) {
    const auto it = pos.find(g.area_ids[gi]);
    if (it == pos.end())
      throw Error(ErrorKind::InvalidInput,
                  "area '" + g.area_ids[gi] + "' is in the graph but not in the dataset");
    for (int j = 0; j < dims.T; ++j)
      for (int k = 0; k < dims.K; ++k) {
        out.observed(dims.cell(gi, j, k)) = d.O(it->second, j, k);
        out.population(dims.cell(gi, j, k)) = d.N(it->second, j, k);
      }
  }
  return out;
}

}  // namespace stam
