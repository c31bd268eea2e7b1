#include "oracle.hpp"
#include "pmoep/bench.hpp"
#include "pmoep/select.hpp"

#include <doctest.h>

#include <cmath>

using namespace pmoep;

TEST_CASE("bic_score arithmetic") {
  EmResult r;
  r.model = MoEPModel{{{2.0, 1.0, 1.0}}};
  r.log_likelihood = -42.0;
  CHECK(bic_score(r, 100) == doctest::Approx(-42.0 - std::log(100.0)));
  EmResult two = r;
  two.model.components = {{2.0, 1.0, 0.5}, {1.0, 1.0, 0.5}};
  CHECK(bic_score(r, 100) - bic_score(two, 100) == doctest::Approx(std::log(100.0)));
}

TEST_CASE("bic_score against 50-digit summation") {
  SyntheticSpec spec;
  spec.regime = NoiseRegime::laplace;
  spec.seed = 2;
  const auto data = generate_synthetic(spec);
  EmConfig c;
  c.p_candidates = {1.0, 2.0};
  c.penalty.lambda = 0.01;
  c.restarts = 1;
  const EmResult fit = fit_pmoep(data.observed, c);
  const VectorXd e = data.observed.residuals(fit.factors.product());
  std::vector<oracle::Component> comps;
  for (const auto& k : fit.model.components) comps.push_back({k.p, k.eta, k.pi});
  const std::vector<double> res(e.data(), e.data() + e.size());
  const double omega = static_cast<double>(e.size());
  const double expected = static_cast<double>(oracle::mixture_loglik(res, comps)) -
                          0.5 * 2.0 * static_cast<double>(comps.size()) * std::log(omega);
  CHECK(bic_score(fit, e.size()) == doctest::Approx(expected).epsilon(1e-10));
  // Invariant to component order.
  EmResult swapped = fit;
  std::reverse(swapped.model.components.begin(), swapped.model.components.end());
  CHECK(bic_score(swapped, e.size()) == doctest::Approx(bic_score(fit, e.size())).epsilon(1e-12));
}

TEST_CASE("select_lambda") {
  SyntheticSpec spec;
  spec.seed = 4;
  const auto data = generate_synthetic(spec);
  EmConfig c;
  c.p_candidates = {1.0, 2.0};
  c.restarts = 1;
  c.seed = 3;
  SUBCASE("one candidate") {
    const auto report = select_lambda(data.observed, c, {0.05});
    REQUIRE(report.records.size() == 1);
    CHECK(report.best().lambda == 0.05);
  }
  SUBCASE("chosen record maximizes bic and is reproducible") {
    const std::vector<double> grid{0.001, 0.05, 0.3};
    const auto a = select_lambda(data.observed, c, grid);
    const auto b = select_lambda(data.observed, c, grid);
    CHECK(a.chosen == b.chosen);
    for (const auto& rec : a.records) {
      if (rec.ok()) CHECK(rec.bic <= a.best().bic);
    }
  }
  SUBCASE("empty grid") { CHECK_THROWS_AS(select_lambda(data.observed, c, {}), InputError); }
}
