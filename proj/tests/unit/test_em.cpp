#include "pmoep/bench.hpp"
#include "pmoep/em.hpp"

#include <doctest.h>

#include <random>

using namespace pmoep;

namespace {

MatrixXd random_matrix(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  return MatrixXd::NullaryExpr(m, n, [&] { return normal(rng); });
}

}  // namespace

TEST_CASE("objective_monotone_check") {
  const std::vector<double> up{-5.0, -4.0, -3.5, -3.5, 1.0};
  CHECK(objective_monotone_check(up).monotone);
  const std::vector<double> dip{-5.0, -4.0, -4.001, -3.0};
  const auto report = objective_monotone_check(dip);
  CHECK_FALSE(report.monotone);
  REQUIRE(report.first_violation.has_value());
  CHECK(*report.first_violation == 2);
  const std::vector<double> within{100.0, 100.0 - 1e-7};
  CHECK(objective_monotone_check(within).monotone);
}

TEST_CASE("config validation") {
  const ObservedMatrix y(random_matrix(10, 8, 1));
  EmConfig c;
  c.rank = 2;
  c.p_candidates = {};
  CHECK_THROWS_AS(fit_pmoep(y, c), InputError);
  c.p_candidates = {1.0, -2.0};
  CHECK_THROWS_AS(fit_pmoep(y, c), InputError);
  c.p_candidates = {2.0};
  c.restarts = 0;
  CHECK_THROWS_AS(fit_pmoep(y, c), InputError);
  c.restarts = 1;
  c.rank = 6;  // needs r (m + n) = 108 observed entries
  CHECK_THROWS_AS(fit_pmoep(y, c), InputError);
}

TEST_CASE("noiseless exact rank") {
  const MatrixXd Y = random_matrix(20, 3, 2) * random_matrix(3, 12, 3);
  EmConfig c;
  c.rank = 3;
  c.p_candidates = {2.0};
  c.restarts = 2;
  c.seed = 4;
  const EmResult r = fit_pmoep(ObservedMatrix(Y), c);
  CHECK(r.k_final() == 1);
  CHECK((Y - r.factors.product()).norm() / Y.norm() <= 1e-6);
}

TEST_CASE("initial model spreads repeated shapes") {
  const std::vector<double> p{2.0, 1.0, 2.0, 2.0};
  const MoEPModel m = initial_model(p);
  CHECK(m.size() == 4);
  CHECK(m.components[0].eta == 1.0);
  CHECK(m.components[1].eta == 1.0);
  CHECK(m.components[2].eta == doctest::Approx(0.25));
  CHECK(m.components[3].eta == doctest::Approx(0.0625));
  for (const auto& c : m.components) CHECK(c.pi == doctest::Approx(0.25));
}

TEST_CASE("fits are reproducible per seed and monotone") {
  SyntheticSpec spec;
  spec.regime = NoiseRegime::mixture2;
  spec.seed = 5;
  const auto data = generate_synthetic(spec);
  EmConfig c;
  c.p_candidates = {0.5, 1.0, 2.0};
  c.penalty.lambda = 0.01;
  c.restarts = 2;
  c.seed = 9;
  const EmResult a = fit_pmoep(data.observed, c);
  const EmResult b = fit_pmoep(data.observed, c);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(a.factors.U == b.factors.U);
  CHECK(objective_monotone_check(a.objective_trace).monotone);
  double pi_sum = 0.0;
  for (const auto& comp : a.model.components) {
    CHECK(comp.pi > 0.0);
    CHECK(comp.eta >= kEtaMin);
    CHECK(comp.eta <= kEtaMax);
    pi_sum += comp.pi;
  }
  CHECK(pi_sum == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(((a.resp.gamma.rowwise().sum().array() - 1.0).abs() < 1e-10).all());
  for (std::size_t t = 1; t < a.component_trace.size(); ++t) CHECK(a.component_trace[t] <= a.component_trace[t - 1]);
}

TEST_CASE("restart seeds are distinct") {
  CHECK(restart_seed(1, 0) != restart_seed(1, 1));
  CHECK(restart_seed(1, 0) != restart_seed(2, 0));
  CHECK(restart_seed(3, 4) == restart_seed(3, 4));
}
