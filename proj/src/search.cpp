#include "stam/search.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "stam/error.hpp"

namespace stam {

namespace {

const char* kResultsHeader = "spec,waic,p_eff,converged,seconds";

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_num(std::string_view s, int line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::InvalidInput,
                "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = line.find(sep, start);
    out.push_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

bool operator==(const SearchRow& a, const SearchRow& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.spec == b.spec && same(a.waic, b.waic) && same(a.p_eff, b.p_eff) &&
         a.converged == b.converged && same(a.seconds, b.seconds);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& spec) {
  // FNV-1a over the spec text, mixed with the master seed (splitmix64)
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : spec) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_result_row(const SearchRow& r) {
  return r.spec + "," + num(r.waic) + "," + num(r.p_eff) + "," + (r.converged ? "1" : "0") + "," +
         num(r.seconds) + "\n";
}

std::string format_results_csv(const std::vector<SearchRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) out += format_result_row(r);
  return out;
}

std::vector<SearchRow> parse_results_csv(std::string_view text) {
  std::vector<SearchRow> rows;
  std::size_t pos = 0;
  int line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != kResultsHeader)
        throw Error(ErrorKind::InvalidInput, "line 1: expected header '" + std::string(kResultsHeader) + "'");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5)
      throw Error(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": expected 5 fields");
    SearchRow r;
    r.spec = to_string(parse_spec(f[0]));
    r.waic = parse_num(f[1], line_no);
    r.p_eff = parse_num(f[2], line_no);
    if (f[3] != "0" && f[3] != "1")
      throw Error(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": converged must be 0 or 1");
    r.converged = f[3] == "1";
    r.seconds = parse_num(f[4], line_no);
    rows.push_back(std::move(r));
  }
  if (!header) throw Error(ErrorKind::InvalidInput, "results file has no header");
  return rows;
}

SearchReport make_report(std::vector<SearchRow> rows) {
  SearchReport rep;
  rep.rows = std::move(rows);
  for (int f = 0; f < kFamilyCount; ++f) rep.best_per_family.push_back({f, family_label(f), std::nullopt});
  const SearchRow* overall = nullptr;
  for (const auto& r : rep.rows) {
    if (!r.converged || !std::isfinite(r.waic)) continue;
    auto& fb = rep.best_per_family[static_cast<std::size_t>(family_of(parse_spec(r.spec)))];
    if (!fb.best || r.waic < fb.best->waic) fb.best = r;
    if (!overall || r.waic < overall->waic) overall = &r;
  }
  if (overall) rep.overall_best = overall->spec;
  return rep;
}

std::string format_summary_csv(const SearchReport& r) {
  std::string out = "family,delta,gamma,z1,z2,z3,spec,waic\n";
  for (const auto& fb : r.best_per_family) {
    out += fb.label + ",";
    if (!fb.best) {
      out += ",,,,,,\n";
      continue;
    }
    const ModelSpec s = parse_spec(fb.best->spec);
    auto inter = [](const std::optional<InteractionType>& t) { return t ? to_string(*t) : std::string("-"); };
    out += to_string(s.delta) + "," + to_string(s.gamma) + "," + inter(s.zeta1) + "," + inter(s.zeta2) +
           "," + inter(s.zeta3) + "," + fb.best->spec + "," + num(fb.best->waic) + "\n";
  }
  return out;
}

SearchReport run_search(const Dataset& d, const VectorXd& expected, const SpatialGraph& g,
                        const std::vector<ModelSpec>& specs, const SearchOptions& opts) {
  if (specs.empty()) throw Error(ErrorKind::InvalidInput, "no specs to search");
  if (opts.jobs < 1) throw Error(ErrorKind::InvalidInput, "jobs must be >= 1");
  validate(d);

  std::map<std::string, SearchRow> done;
  const bool have_file = !opts.checkpoint_path.empty();
  if (have_file && opts.resume) {
    std::ifstream in(opts.checkpoint_path);
    if (in) {
      std::stringstream ss;
      ss << in.rdbuf();
      for (auto& r : parse_results_csv(ss.str())) done.emplace(r.spec, r);
    }
  }
  std::ofstream sink;
  if (have_file) {
    const bool append = opts.resume && !done.empty();
    sink.open(opts.checkpoint_path, append ? std::ios::app : std::ios::trunc);
    if (!sink) throw Error(ErrorKind::InvalidInput, "cannot write " + opts.checkpoint_path);
    if (!append) sink << kResultsHeader << "\n" << std::flush;
  }

  // unique specs still to fit, first occurrence order
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(to_string(s));
  std::vector<std::size_t> todo;
  {
    std::map<std::string, bool> seen;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (done.count(names[i]) || seen.count(names[i])) continue;
      seen[names[i]] = true;
      todo.push_back(i);
    }
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= todo.size()) return;
      const std::size_t i = todo[t];
      SearchRow row;
      row.spec = names[i];
      const auto t0 = std::chrono::steady_clock::now();
      FitOptions fo = opts.fit;
      fo.seed = derive_seed(opts.seed, row.spec);
      fo.keep_draws = false;
      try {
        const FitResult fit = fit_laplace(d, expected, g, specs[i], fo);
        row.waic = fit.waic;
        row.p_eff = fit.p_eff;
        row.converged = fit.diagnostics.converged && std::isfinite(fit.waic);
      } catch (const Error&) {
        row.waic = std::numeric_limits<double>::quiet_NaN();
        row.p_eff = std::numeric_limits<double>::quiet_NaN();
        row.converged = false;
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard<std::mutex> lock(mu);
      done.emplace(row.spec, row);
      if (have_file) sink << format_result_row(row) << std::flush;
      if (opts.on_row) opts.on_row(row);
    }
  };
  const int n_threads = std::min<int>(opts.jobs, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<SearchRow> rows;
  for (const auto& n : names) rows.push_back(done.at(n));
  SearchReport rep = make_report(std::move(rows));
  if (rep.overall_best.empty()) throw Error(ErrorKind::SearchFailed, "every fit failed to converge");
  return rep;
}

}  // namespace stam
