#include "stam/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stam/dataset.hpp"
#include "stam/error.hpp"
#include "stam/gmrf.hpp"
#include "stam/graph.hpp"
#include "stam/inference.hpp"
#include "stam/model.hpp"
#include "stam/model_spec.hpp"
#include "stam/search.hpp"
#include "stam/simulate.hpp"
#include "stam/standardize.hpp"

namespace stam {

namespace {

namespace fs = std::filesystem;

// JSON config: one object per subcommand, keyed by long option names, e.g.
// {"simulate": {"grid": "6x6", "seed": 3}}. Arrays become repeated inputs.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [section, options] : j.items()) {
      if (!options.is_object())
        throw CLI::ConversionError("config: '" + section + "' must map option names to values");
      for (const auto& [key, value] : options.items()) {
        CLI::ConfigItem item;
        item.parents = {section};
        item.name = key;
        if (value.is_array()) {
          for (const auto& v : value) item.inputs.push_back(scalar(v));
        } else {
          item.inputs.push_back(scalar(value));
        }
        items.push_back(std::move(item));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config: unsupported value " + v.dump());
  }
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::InvalidInput, "cannot create directory " + dir + ": " + ec.message());
}

// "10x10" -> rook grid
SpatialGraph parse_grid(const std::string& text) {
  const auto x = text.find('x');
  int r = 0, c = 0;
  if (x != std::string::npos) {
    const auto a = std::from_chars(text.data(), text.data() + x, r);
    const auto b = std::from_chars(text.data() + x + 1, text.data() + text.size(), c);
    if (a.ec == std::errc() && b.ec == std::errc() && a.ptr == text.data() + x &&
        b.ptr == text.data() + text.size() && r > 0 && c > 0)
      return grid_graph(r, c);
  }
  throw Error(ErrorKind::InvalidInput, "grid must look like <rows>x<cols>, got '" + text + "'");
}

struct Inputs {
  Dataset data;
  SpatialGraph graph;
  VectorXd expected;
};

Inputs load_inputs(const std::string& data_path, const std::string& adjacency_path) {
  Inputs in;
  in.graph = read_adjacency_file(adjacency_path);
  in.data = align_to_graph(read_dataset_csv(data_path), in.graph);
  validate(in.data);
  in.expected = expected_counts(in.data, stratum_rates(in.data)).expected;
  return in;
}

std::vector<ModelSpec> read_specs_file(const std::string& path) {
  std::istringstream lines(read_text_file(path));
  std::vector<ModelSpec> specs;
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t");
    const ModelSpec s = parse_spec(line.substr(first, last - first + 1));
    validate(s);
    specs.push_back(s);
  }
  if (specs.empty()) throw Error(ErrorKind::InvalidInput, path + " lists no specs");
  return specs;
}

void write_sparse(std::ostream& out, const SparseMatrix& m) {
  for (Index col = 0; col < m.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(m, col); it; ++it)
      out << it.row() << " " << it.col() << " " << num(it.value()) << "\n";
}

// ---------------------------------------------------------------- check

struct CheckArgs {
  std::string data, adjacency, out_dir = ".";
  int min_points = 3;
  double r2_threshold = 0.5;
};

int cmd_check(const CheckArgs& a, std::ostream& out) {
  Dataset d = read_dataset_csv(a.data);
  if (!a.adjacency.empty()) d = align_to_graph(d, read_adjacency_file(a.adjacency));
  validate(d);
  ProportionalityOptions opts;
  opts.min_points = a.min_points;
  opts.r2_threshold = a.r2_threshold;
  const ProportionalityReport rep = proportionality_check(d, stratum_rates(d), opts);
  ensure_dir(a.out_dir);
  const std::string report = join_path(a.out_dir, "proportionality_report.csv");
  const std::string points = join_path(a.out_dir, "proportionality_points.csv");
  write_text_file(report, format_report_csv(d, rep));
  write_text_file(points, format_points_csv(d, rep));
  out << "assessed " << rep.n_assessed() << " flagged " << rep.n_flagged() << "\n";
  out << "wrote " << report << "\n" << "wrote " << points << "\n";
  return rep.n_flagged() > 0 ? kExitViolations : kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string data, adjacency, spec, prior = "pc", out_dir = ".";
  std::uint64_t seed = 1;
  int draws = 1000;
  bool mcmc_check = false;
  int mcmc_iterations = 20000;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const ModelSpec spec = parse_spec(a.spec);
  validate(spec);
  const PriorFamily prior = parse_prior_family(a.prior);
  const Inputs in = load_inputs(a.data, a.adjacency);
  FitOptions fo;
  fo.prior = prior;
  fo.seed = a.seed;
  fo.n_draws = a.draws;
  const FitResult fit = fit_laplace(in.data, in.expected, in.graph, spec, fo);

  ensure_dir(a.out_dir);
  const std::string json_path = join_path(a.out_dir, "fit.json");
  write_text_file(json_path, fit_to_json(fit));
  out << "wrote " << json_path << "\n";
  for (const auto& t : export_effects(fit)) {
    const std::string p = join_path(a.out_dir, "effects_" + t.name + ".csv");
    write_text_file(p, format_effect_csv(t));
    out << "wrote " << p << "\n";
  }
  out << "waic " << num(fit.waic) << " p_eff " << num(fit.p_eff) << "\n";

  if (a.mcmc_check) {
    McmcOptions mo;
    mo.prior = prior;
    mo.seed = a.seed;
    mo.iterations = a.mcmc_iterations;
    const FitResult mc = fit_mcmc(in.data, in.expected, in.graph, spec, mo);
    const std::string p = join_path(a.out_dir, "fit_mcmc.json");
    write_text_file(p, fit_to_json(mc));
    out << "wrote " << p << "\n";
    double mean_gap = std::abs(mc.alpha.mean - fit.alpha.mean);
    for (const auto& b : fit.latent_summary)
      if (mc.has_block(b.block))
        mean_gap = std::max(mean_gap, (mc.block(b.block).mean - b.mean).cwiseAbs().maxCoeff());
    out << "mcmc max |mean difference| " << num(mean_gap) << "\n";
  }

  const auto& dg = fit.diagnostics;
  if (!dg.converged || !dg.outer_converged) {
    err << "fit did not converge: inner " << dg.converged << ", outer " << dg.outer_converged
        << ", max gradient " << num(dg.max_gradient) << ", evaluations " << dg.outer_evaluations;
    if (!dg.message.empty()) err << ", " << dg.message;
    err << "\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- search

struct SearchArgs {
  std::string data, adjacency, specs_file, out_dir = ".", prior = "pc";
  bool full = false, resume = false;
  int jobs = 1;
  int draws = 1000;
  std::uint64_t seed = 1;
};

int cmd_search(const SearchArgs& a, std::ostream& out) {
  if (a.full == !a.specs_file.empty())
    throw Error(ErrorKind::InvalidInput, "give exactly one of --full and --specs-file");
  const std::vector<ModelSpec> specs = a.full ? enumerate_models() : read_specs_file(a.specs_file);
  const Inputs in = load_inputs(a.data, a.adjacency);
  ensure_dir(a.out_dir);
  const std::string results = join_path(a.out_dir, "search_results.csv");
  const std::string summary = join_path(a.out_dir, "search_summary.csv");

  SearchOptions so;
  so.fit.prior = parse_prior_family(a.prior);
  so.fit.n_draws = a.draws;
  so.jobs = a.jobs;
  so.seed = a.seed;
  so.checkpoint_path = results;
  so.resume = a.resume;
  std::size_t n_done = 0;
  so.on_row = [&](const SearchRow& r) {
    ++n_done;
    out << "[" << n_done << "] " << r.spec << " waic " << num(r.waic) << (r.converged ? "" : " (failed)")
        << "\n" << std::flush;
  };
  const SearchReport rep = run_search(in.data, in.expected, in.graph, specs, so);
  // rewrite in input order now that every row is known
  write_text_file(results, format_results_csv(rep.rows));
  write_text_file(summary, format_summary_csv(rep));
  out << "best " << rep.overall_best << "\n";
  out << "wrote " << results << "\n" << "wrote " << summary << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string grid = "10x10", adjacency, spec = "delta=rw1;gamma=rw1;z1=II;z2=II;z3=-";
  std::string population = "constant", out_dir = ".";
  int periods = 7, ages = 16;
  double alpha = -0.75, per_cell = 1e4, lambda = 0.5, violation = 0.0;
  double sigma_phi = 0.5, sigma_delta = 0.3, sigma_gamma = 0.3;
  double sigma_z1 = 0.2, sigma_z2 = 0.2, sigma_z3 = 0.2;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const ModelSpec spec = parse_spec(a.spec);
  validate(spec);
  const SpatialGraph g = a.adjacency.empty() ? parse_grid(a.grid) : read_adjacency_file(a.adjacency);
  auto tau = [](double sigma, const char* name) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidHyperparameter, std::string(name) + " must be positive");
    return 1.0 / (sigma * sigma);
  };
  Hyperparameters h = default_hyperparameters(spec);
  h.tau_phi = tau(a.sigma_phi, "sigma-phi");
  h.lambda_phi = a.lambda;
  if (h.tau_delta) h.tau_delta = tau(a.sigma_delta, "sigma-delta");
  if (h.tau_gamma) h.tau_gamma = tau(a.sigma_gamma, "sigma-gamma");
  if (h.tau_zeta1) h.tau_zeta1 = tau(a.sigma_z1, "sigma-z1");
  if (h.tau_zeta2) h.tau_zeta2 = tau(a.sigma_z2, "sigma-z2");
  if (h.tau_zeta3) h.tau_zeta3 = tau(a.sigma_z3, "sigma-z3");
  validate(h);
  Populations pop;
  pop.policy = parse_population_policy(a.population);
  pop.per_cell = a.per_cell;

  Simulation sim = simulate_dataset(g, a.periods, a.ages, spec, h, a.alpha, pop, a.seed);
  if (a.violation != 0.0)
    sim.data = make_proportionality_violation(sim.data, a.violation, derive_seed(a.seed, "violation"));

  ensure_dir(a.out_dir);
  const std::string data = join_path(a.out_dir, "data.csv");
  const std::string truth = join_path(a.out_dir, "truth.json");
  const std::string adjacency = join_path(a.out_dir, "adjacency.txt");
  write_text_file(data, format_dataset_csv(sim.data));
  write_text_file(truth, truth_to_json(sim));
  write_text_file(adjacency, format_adjacency(g));
  out << "wrote " << data << "\n" << "wrote " << truth << "\n" << "wrote " << adjacency << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- structure

struct StructureArgs {
  std::string kind, grid = "3x3", adjacency, type = "IV", output;
  int n = 5, periods = 4, ages = 3;
  double lambda = 0.5, tau = 1.0;
};

int cmd_structure(const StructureArgs& a, std::ostream& out) {
  auto graph = [&] { return a.adjacency.empty() ? parse_grid(a.grid) : read_adjacency_file(a.adjacency); };
  auto interaction = [&](InteractionWhich which) {
    InteractionType t;
    if (a.type == "I") t = InteractionType::I;
    else if (a.type == "II") t = InteractionType::II;
    else if (a.type == "III") t = InteractionType::III;
    else if (a.type == "IV") t = InteractionType::IV;
    else throw Error(ErrorKind::InvalidInput, "type must be I, II, III or IV");
    const InteractionKind kind{which, t};
    const auto [sl, sr] = structured_operands(kind);
    StructureMatrix left, right;
    if (which == InteractionWhich::TimeAge) {
      left = sl ? rw1_structure(a.ages) : identity_structure(a.ages);
    } else {
      const SpatialGraph g = graph();
      left = sl ? icar_structure(g) : identity_structure(g.n_areas());
    }
    const Index nr = which == InteractionWhich::SpaceAge ? a.ages : a.periods;
    right = sr ? rw1_structure(nr) : identity_structure(nr);
    return interaction_structure(kind, left, right).entries;
  };

  SparseMatrix m;
  if (a.kind == "rw1") m = rw1_structure(a.n).entries;
  else if (a.kind == "iid") m = identity_structure(a.n).entries;
  else if (a.kind == "icar") m = icar_structure(graph()).entries;
  else if (a.kind == "leroux") m = leroux_precision(icar_structure(graph()), a.lambda, a.tau);
  else if (a.kind == "z1") m = interaction(InteractionWhich::SpaceTime);
  else if (a.kind == "z2") m = interaction(InteractionWhich::SpaceAge);
  else if (a.kind == "z3") m = interaction(InteractionWhich::TimeAge);
  else throw Error(ErrorKind::InvalidInput, "unknown matrix kind '" + a.kind + "'");

  if (a.output.empty()) {
    write_sparse(out, m);
  } else {
    std::ostringstream s;
    write_sparse(s, m);
    write_text_file(a.output, s.str());
    out << "wrote " << a.output << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age-structured space-time Poisson models for small-area counts", "stam"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON file with an object of option values per subcommand; flags win");
  app.config_formatter(std::make_shared<JsonConfig>());
  app.fallthrough();  // lets --config follow the subcommand name

  CheckArgs ca;
  auto* check = app.add_subcommand("check", "Indirect standardization and the proportionality diagnostic");
  check->add_option("--data", ca.data, "Dataset CSV")->required();
  check->add_option("--adjacency", ca.adjacency, "Adjacency file; reorders areas to its order");
  check->add_option("--out-dir", ca.out_dir, "Output directory")->capture_default_str();
  check->add_option("--min-points", ca.min_points, "Strata needed to assess a cell")->capture_default_str();
  check->add_option("--r2-threshold", ca.r2_threshold, "Flag cells whose R^2 is below this")
      ->capture_default_str();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit one model by the Laplace scheme");
  fit->add_option("--data", fa.data, "Dataset CSV")->required();
  fit->add_option("--adjacency", fa.adjacency, "Adjacency file")->required();
  fit->add_option("--spec", fa.spec, "Model, e.g. \"delta=rw1;gamma=rw1;z1=II;z2=II;z3=-\"")->required();
  fit->add_option("--prior", fa.prior, "Hyperprior: pc or flat")->capture_default_str();
  fit->add_option("--seed", fa.seed, "Random seed")->capture_default_str();
  fit->add_option("--draws", fa.draws, "Posterior draws")->capture_default_str();
  fit->add_flag("--mcmc-check", fa.mcmc_check, "Also run the MCMC sampler and compare");
  fit->add_option("--mcmc-iterations", fa.mcmc_iterations, "MCMC iterations")->capture_default_str();
  fit->add_option("--out-dir", fa.out_dir, "Output directory")->capture_default_str();

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "Fit a set of models and rank them by WAIC");
  search->add_option("--data", sa.data, "Dataset CSV")->required();
  search->add_option("--adjacency", sa.adjacency, "Adjacency file")->required();
  search->add_flag("--full", sa.full, "All 520 models");
  search->add_option("--specs-file", sa.specs_file, "One spec per line");
  search->add_option("--jobs", sa.jobs, "Worker threads")->capture_default_str();
  search->add_flag("--resume", sa.resume, "Skip specs already in the results file");
  search->add_option("--seed", sa.seed, "Master seed")->capture_default_str();
  search->add_option("--prior", sa.prior, "Hyperprior: pc or flat")->capture_default_str();
  search->add_option("--draws", sa.draws, "Posterior draws per fit")->capture_default_str();
  search->add_option("--out-dir", sa.out_dir, "Output directory")->capture_default_str();

  SimulateArgs ma;
  auto* simulate = app.add_subcommand("simulate", "Simulate a dataset with known truth");
  simulate->add_option("--grid", ma.grid, "Rook lattice <rows>x<cols>")->capture_default_str();
  simulate->add_option("--adjacency", ma.adjacency, "Adjacency file instead of a lattice");
  simulate->add_option("--periods", ma.periods, "T")->capture_default_str();
  simulate->add_option("--ages", ma.ages, "K")->capture_default_str();
  simulate->add_option("--spec", ma.spec, "Generating model")->capture_default_str();
  simulate->add_option("--alpha", ma.alpha, "Intercept")->capture_default_str();
  simulate->add_option("--sigma-phi", ma.sigma_phi)->capture_default_str();
  simulate->add_option("--lambda", ma.lambda, "Leroux mixing")->capture_default_str();
  simulate->add_option("--sigma-delta", ma.sigma_delta)->capture_default_str();
  simulate->add_option("--sigma-gamma", ma.sigma_gamma)->capture_default_str();
  simulate->add_option("--sigma-z1", ma.sigma_z1)->capture_default_str();
  simulate->add_option("--sigma-z2", ma.sigma_z2)->capture_default_str();
  simulate->add_option("--sigma-z3", ma.sigma_z3)->capture_default_str();
  simulate->add_option("--population", ma.population, "constant or pyramid")->capture_default_str();
  simulate->add_option("--per-cell", ma.per_cell, "Mean population per cell")->capture_default_str();
  simulate->add_option("--violation", ma.violation, "Proportionality violation strength")
      ->capture_default_str();
  simulate->add_option("--seed", ma.seed, "Random seed")->capture_default_str();
  simulate->add_option("--out-dir", ma.out_dir, "Output directory")->capture_default_str();

  StructureArgs ta;
  auto* structure = app.add_subcommand("structure", "Print a structure matrix as `row col value` lines");
  structure->add_option("kind", ta.kind, "rw1, iid, icar, leroux, z1, z2 or z3")->required();
  structure->add_option("--n", ta.n, "Size for rw1 and iid")->capture_default_str();
  structure->add_option("--grid", ta.grid, "Rook lattice <rows>x<cols>")->capture_default_str();
  structure->add_option("--adjacency", ta.adjacency, "Adjacency file instead of a lattice");
  structure->add_option("--periods", ta.periods, "T")->capture_default_str();
  structure->add_option("--ages", ta.ages, "K")->capture_default_str();
  structure->add_option("--type", ta.type, "Interaction type I-IV")->capture_default_str();
  structure->add_option("--lambda", ta.lambda)->capture_default_str();
  structure->add_option("--tau", ta.tau)->capture_default_str();
  structure->add_option("--output", ta.output, "Write to a file instead of stdout");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (check->parsed()) return cmd_check(ca, out);
    if (fit->parsed()) return cmd_fit(fa, out, err);
    if (search->parsed()) return cmd_search(sa, out);
    if (simulate->parsed()) return cmd_simulate(ma, out);
    if (structure->parsed()) return cmd_structure(ta, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == ErrorKind::NonConvergence ? kExitNonConvergence : kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace stam
