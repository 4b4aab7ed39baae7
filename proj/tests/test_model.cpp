#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "stam/dataset.hpp"
#include "stam/error.hpp"
#include "stam/model.hpp"
#include "stam/model_spec.hpp"

using namespace stam;

namespace {

Dataset lattice(int S, int T, int K) {
  Dataset d;
  for (int i = 0; i < S; ++i) d.area_ids.push_back("a" + std::to_string(i));
  for (int j = 0; j < T; ++j) d.period_labels.push_back("t" + std::to_string(j));
  for (int k = 0; k < K; ++k) d.age_labels.push_back("k" + std::to_string(k));
  d.observed = VectorXd::Zero(static_cast<Index>(S) * T * K);
  d.population = VectorXd::Constant(d.observed.size(), 100.0);
  return d;
}

VectorXd randn(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = z(rng);
  return v;
}

}  // namespace

TEST_CASE("spec strings round-trip and validate") {
  const ModelSpec m7 = parse_spec("delta=rw1;gamma=rw1;z1=II;z2=II;z3=-");
  CHECK(m7.delta == MainStructure::Rw1);
  CHECK(m7.zeta2 == InteractionType::II);
  CHECK_FALSE(m7.zeta3.has_value());
  CHECK(to_string(m7) == "delta=rw1;gamma=rw1;z1=II;z2=II;z3=-");
  CHECK(family_of(m7) == 6);

  try {
    validate(parse_spec("delta=-;gamma=-;z1=I;z2=-;z3=-"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidSpecification);
  }
  CHECK_THROWS_AS(parse_spec("delta=rw2;gamma=-;z1=-;z2=-;z3=-"), Error);
  CHECK_THROWS_AS(parse_spec("delta=rw1;z4=I"), Error);
  CHECK_THROWS_AS(parse_spec("delta rw1"), Error);
  // omitted keys mean absent effects
  CHECK(to_string(parse_spec("delta=rw1")) == "delta=rw1;gamma=-;z1=-;z2=-;z3=-");
}

TEST_CASE("enumerate_models") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ModelSpec> all = enumerate_models();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(all.size() == 520u);
  CHECK(secs < 1.0);
  std::set<std::string> names;
  std::array<int, 12> counts{};
  for (const auto& s : all) {
    validate(s);
    names.insert(to_string(s));
    ++counts[static_cast<std::size_t>(enumeration_group(s))];
  }
  CHECK(names.size() == 520u);
  CHECK(counts == kGroupSizes);
  CHECK(to_string(all.front()) == "delta=iid;gamma=-;z1=-;z2=-;z3=-");
  int full = 0;
  for (const auto& s : all) full += s.zeta1 && s.zeta2 && s.zeta3;
  CHECK(full == 256);
  // enumeration groups appear in order
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(enumeration_group(all[i - 1]) <= enumeration_group(all[i]));
}

TEST_CASE("linear_predictor") {
  const ModelSpec main_only = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  LatentState x;
  x.alpha = 0.5;
  x.phi = VectorXd::Zero(3);
  x.delta = VectorXd::Zero(2);
  CHECK(linear_predictor(main_only, x, 1, 1, 0) == 0.5);
  x.phi(2) = -0.2;
  (*x.delta)(1) = 0.1;
  CHECK(linear_predictor(main_only, x, 2, 1, 0) == doctest::Approx(0.4));
  x.delta.reset();
  CHECK_THROWS_AS(linear_predictor(main_only, x, 0, 0, 0), Error);
}

TEST_CASE("linear_predictor against raw block arrays") {
  const int S = 3, T = 4, K = 2;
  const ModelSpec spec = parse_spec("delta=rw1;gamma=iid;z1=IV;z2=II;z3=III");
  std::mt19937_64 rng(8);
  LatentState x;
  x.alpha = -0.3;
  x.phi = randn(S, rng);
  x.delta = randn(T, rng);
  x.gamma = randn(K, rng);
  x.zeta1 = randn(S * T, rng);
  x.zeta2 = randn(S * K, rng);
  x.zeta3 = randn(K * T, rng);
  // raw arrays indexed [i][j], [i][k], [k][j]
  double z1[S][T], z2[S][K], z3[K][T];
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < T; ++j) z1[i][j] = (*x.zeta1)(i * T + j);
  for (int i = 0; i < S; ++i)
    for (int k = 0; k < K; ++k) z2[i][k] = (*x.zeta2)(i * K + k);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < T; ++j) z3[k][j] = (*x.zeta3)(k * T + j);

  const LatentLayout layout(spec, {S, T, K});
  const VectorXd flat = flatten(layout, x);
  const VectorXd all = linear_predictor_all(layout, flat);
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < T; ++j)
      for (int k = 0; k < K; ++k) {
        const double expect = x.alpha + x.phi(i) + (*x.delta)(j) + (*x.gamma)(k) + z1[i][j] + z2[i][k] + z3[k][j];
        CHECK(linear_predictor(spec, x, i, j, k) == doctest::Approx(expect).epsilon(1e-14));
        CHECK(all((i * T + j) * K + k) == doctest::Approx(expect).epsilon(1e-14));
      }
  const LatentState back = unflatten(layout, flat);
  CHECK(back.phi == x.phi);
  CHECK(*back.zeta3 == *x.zeta3);
  CHECK(layout.dim() == 1 + S + T + K + S * T + S * K + K * T);
}

TEST_CASE("moving a constant from alpha into phi leaves the predictor unchanged") {
  const ModelSpec spec = parse_spec("delta=rw1;gamma=rw1;z1=-;z2=-;z3=-");
  std::mt19937_64 rng(4);
  LatentState x;
  x.alpha = 0.2;
  x.phi = randn(4, rng);
  x.delta = randn(3, rng);
  x.gamma = randn(2, rng);
  LatentState y = x;
  y.alpha -= 0.7;
  y.phi.array() += 0.7;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(linear_predictor(spec, x, i, j, k) == doctest::Approx(linear_predictor(spec, y, i, j, k)).epsilon(1e-15));
}

TEST_CASE("poisson_loglik") {
  const ModelSpec spec = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  Dataset d = lattice(2, 2, 2);
  LatentState x;
  x.phi = VectorXd::Zero(2);
  x.delta = VectorXd::Zero(2);
  VectorXd e = VectorXd::LinSpaced(8, 0.5, 4.0);
  CHECK(poisson_loglik(d, e, spec, x).total == doctest::Approx(-e.sum()));

  // single cell O = 2, E = 1, eta = 0: log pmf = -1 - log 2
  const LogLikelihood one = poisson_loglik(VectorXd::Constant(1, 2.0), VectorXd::Ones(1), VectorXd::Zero(1));
  CHECK(one.total == doctest::Approx(-1.0 - std::log(2.0)));
  CHECK(one.total == doctest::Approx(-1.6931).epsilon(1e-4));

  // total equals the pointwise sum; E = 0 cells contribute nothing
  std::mt19937_64 rng(2);
  for (Index c = 0; c < 8; ++c) d.observed(c) = static_cast<double>(rng() % 6);
  e(3) = 0.0;
  d.observed(3) = 0.0;
  x.alpha = 0.3;
  const LogLikelihood ll = poisson_loglik(d, e, spec, x);
  CHECK(ll.pointwise(3) == 0.0);
  CHECK(ll.total == doctest::Approx(ll.pointwise.sum()).epsilon(1e-10));

  d.observed(3) = 1.0;
  try {
    poisson_loglik(d, e, spec, x);
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::ImpossibleCell);
  }
}

TEST_CASE("shifting alpha by c scales every fitted mean by exp(c)") {
  const VectorXd eta = VectorXd::LinSpaced(5, -1.0, 1.0);
  const VectorXd obs = VectorXd::Zero(5);
  const VectorXd e = VectorXd::Ones(5);
  // with zero counts the log-likelihood is minus the sum of the means
  const double base = poisson_loglik(obs, e, eta).total;
  const double shifted = poisson_loglik(obs, e, (eta.array() + 0.4).matrix()).total;
  CHECK(shifted == doctest::Approx(base * std::exp(0.4)));
}

TEST_CASE("PC prior rate and hyperprior shape") {
  CHECK(pc_rate() == doctest::Approx(4.60517).epsilon(1e-6));
  CHECK(pc_rate() == doctest::Approx(-std::log(0.01)));
  const double r = pc_rate();
  CHECK(log_prior_sigma(0.4, PriorFamily::PC) - log_prior_sigma(0.8, PriorFamily::PC) == doctest::Approx(r * 0.4));

  const ModelSpec spec = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  for (PriorFamily f : {PriorFamily::PC, PriorFamily::NonInformative}) {
    Hyperparameters a = default_hyperparameters(spec, 2.0, 0.3);
    Hyperparameters b = default_hyperparameters(spec, 2.0, 0.7);
    // on the logit scale the Jacobians differ, on lambda itself the density is flat
    const double la = log_hyperprior(a, f) - std::log(0.3 * 0.7);
    const double lb = log_hyperprior(b, f) - std::log(0.7 * 0.3);
    CHECK(la == doctest::Approx(lb));
  }
}

TEST_CASE("PC hyperprior integrates to one on the internal scale") {
  // one precision plus lambda; integrate exp(log density) over (log tau, logit lambda)
  const ModelSpec spec = parse_spec("delta=iid;gamma=-;z1=-;z2=-;z3=-");
  const HyperLayout layout(spec);
  double total = 0.0;
  const double h = 0.02;
  for (double lt = -30.0; lt <= 30.0; lt += h)
    for (double ll = -30.0; ll <= 30.0; ll += 0.1) {
      VectorXd theta(3);
      theta << lt, 0.0, ll;
      // the delta coordinate is held fixed; remove its contribution
      Hyperparameters hp = layout.from_internal(theta);
      const double sigma_d = 1.0;
      const double fixed = log_prior_sigma(sigma_d, PriorFamily::PC) + std::log(0.5 * sigma_d);
      total += std::exp(log_hyperprior(hp, PriorFamily::PC) - fixed) * h * 0.1;
    }
  CHECK(total == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("HyperLayout round trip and names") {
  const ModelSpec spec = parse_spec("delta=rw1;gamma=iid;z1=II;z2=-;z3=I");
  const HyperLayout layout(spec);
  CHECK(layout.names() ==
        std::vector<std::string>{"sigma_phi", "sigma_delta", "sigma_gamma", "sigma_zeta1", "sigma_zeta3", "lambda_phi"});
  Hyperparameters h = default_hyperparameters(spec, 3.0, 0.25);
  h.tau_zeta3 = 7.0;
  const VectorXd theta = layout.to_internal(h);
  const Hyperparameters back = layout.from_internal(theta);
  CHECK(*back.tau_zeta3 == doctest::Approx(7.0));
  CHECK(back.lambda_phi == doctest::Approx(0.25));
  CHECK_FALSE(back.tau_zeta2.has_value());
  Hyperparameters bad = h;
  bad.lambda_phi = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
}
