#include <charconv>
#include <cmath>

#include <json.hpp>

#include "stam/error.hpp"
#include "stam/inference.hpp"

namespace stam {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::ordered_json summary_json(const std::string& name, const SummaryStats& s) {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["mean"] = s.mean;
  j["sd"] = s.sd;
  j["q0.025"] = s.q025;
  j["q0.25"] = s.q25;
  j["q0.5"] = s.q50;
  j["q0.75"] = s.q75;
  j["q0.975"] = s.q975;
  j["mode"] = s.mode;
  return j;
}

}  // namespace

std::vector<EffectTable> export_effects(const FitResult& fit) {
  std::vector<EffectTable> out;
  auto add = [&](Block b, const char* name, std::vector<std::string> cols,
                 const std::vector<std::string>& outer, const std::vector<std::string>& inner) {
    if (!fit.has_block(b)) return;
    const BlockSummary& s = fit.block(b);
    EffectTable t;
    t.name = name;
    t.key_columns = std::move(cols);
    t.mean = s.mean;
    t.sd = s.sd;
    if (inner.empty()) {
      for (const auto& o : outer) t.keys.push_back({o});
    } else {
      for (const auto& o : outer)
        for (const auto& i : inner) t.keys.push_back({o, i});
    }
    if (static_cast<Index>(t.keys.size()) != t.mean.size())
      throw Error(ErrorKind::SpecificationMismatch, std::string("labels do not match block ") + name);
    out.push_back(std::move(t));
  };
  add(Block::Phi, "spatial", {"area_id"}, fit.area_ids, {});
  add(Block::Delta, "temporal", {"period"}, fit.period_labels, {});
  add(Block::Gamma, "age", {"age_group"}, fit.age_labels, {});
  add(Block::Zeta1, "space_time", {"area_id", "period"}, fit.area_ids, fit.period_labels);
  add(Block::Zeta2, "space_age", {"area_id", "age_group"}, fit.area_ids, fit.age_labels);
  // time-age surfaces are stored age-major (k * T + j)
  add(Block::Zeta3, "time_age", {"age_group", "period"}, fit.age_labels, fit.period_labels);
  return out;
}

std::string format_effect_csv(const EffectTable& t) {
  std::string out;
  for (const auto& c : t.key_columns) out += c + ",";
  out += "mean,sd,exp_mean\n";
  for (std::size_t r = 0; r < t.keys.size(); ++r) {
    for (const auto& k : t.keys[r]) out += k + ",";
    const auto i = static_cast<Index>(r);
    out += num(t.mean(i)) + "," + num(t.sd(i)) + "," + num(std::exp(t.mean(i))) + "\n";
  }
  return out;
}

std::string fit_to_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["spec"] = to_string(fit.spec);
  j["prior"] = to_string(fit.prior);
  j["method"] = fit.diagnostics.method;
  j["waic"] = fit.waic;
  j["lppd"] = fit.lppd;
  j["p_eff"] = fit.p_eff;
  auto params = nlohmann::ordered_json::array();
  params.push_back(summary_json("alpha", fit.alpha));
  for (const auto& h : fit.hyper_summary) params.push_back(summary_json(h.name, h.stats));
  j["parameters"] = params;
  j["hyper_mode_internal"] = std::vector<double>(fit.hyper_mode.data(), fit.hyper_mode.data() + fit.hyper_mode.size());
  nlohmann::ordered_json dg;
  const auto& d = fit.diagnostics;
  dg["converged"] = d.converged;
  dg["outer_converged"] = d.outer_converged;
  dg["newton_iterations"] = d.newton_iterations;
  dg["outer_evaluations"] = d.outer_evaluations;
  dg["mixture_components"] = d.mixture_components;
  dg["log_marginal"] = d.log_marginal;
  dg["max_gradient"] = d.max_gradient;
  dg["constraint_residual"] = d.constraint_residual;
  if (d.method == "mcmc") {
    dg["iterations"] = d.iterations;
    dg["latent_acceptance"] = d.latent_acceptance;
    dg["hyper_acceptance"] = d.hyper_acceptance;
  }
  dg["message"] = d.message;
  j["diagnostics"] = dg;
  return j.dump(2) + "\n";
}

}  // namespace stam
