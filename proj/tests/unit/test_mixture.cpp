#include "oracle.hpp"
#include "pmoep/mixture.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pmoep;

namespace {

VectorXd random_residuals(Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  return VectorXd::NullaryExpr(n, [&] { return normal(rng); });
}

Responsibilities resp_from(const MatrixXd& gamma) { return Responsibilities{gamma}; }

}  // namespace

TEST_CASE("e_step single component") {
  const MoEPModel model{{{1.5, 2.0, 1.0}}};
  const auto r = e_step(random_residuals(50, 1), model);
  CHECK((r.gamma.array() == 1.0).all());
}

TEST_CASE("e_step identical components keep the prior") {
  const MoEPModel model{{{2.0, 3.0, 0.3}, {2.0, 3.0, 0.7}}};
  const auto r = e_step(random_residuals(40, 2), model);
  CHECK((r.gamma.col(0).array() - 0.3).abs().maxCoeff() < 1e-14);
  CHECK((r.gamma.col(1).array() - 0.7).abs().maxCoeff() < 1e-14);
}

TEST_CASE("e_step at zero residual") {
  const MoEPModel model{{{2.0, 1.0, 0.5}, {2.0, 100.0, 0.5}}};
  const auto r = e_step(VectorXd::Zero(1), model);
  CHECK(r.gamma(0, 0) == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
  CHECK(r.gamma(0, 1) == doctest::Approx(10.0 / 11.0).epsilon(1e-14));
}

TEST_CASE("e_step rows sum to one, including underflow") {
  const MoEPModel model{{{2.0, 3.0, 0.2}, {3.0, 0.5, 0.3}, {2.0, 1e6, 0.5}}};
  VectorXd e = random_residuals(200, 3, 5.0);
  e(0) = 1e200;  // eta |e|^p overflows in every component
  MixtureDiagnostics diag;
  const auto r = e_step(e, model, &diag);
  CHECK(diag.underflow_entries >= 1);
  CHECK(((r.gamma.rowwise().sum().array() - 1.0).abs() < 1e-10).all());
  CHECK((r.gamma.array() >= 0.0).all());
}

TEST_CASE("log-sum-exp normalization is shift invariant") {
  MatrixXd logw = MatrixXd::Random(20, 3) * 10.0;
  MatrixXd shifted = logw.array() + 700.0;
  normalize_log_rows(logw);
  normalize_log_rows(shifted);
  CHECK((logw - shifted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_pi") {
  SUBCASE("lambda zero is the classic update") {
    MatrixXd g(4, 2);
    g << 0.2, 0.8, 0.5, 0.5, 1.0, 0.0, 0.1, 0.9;
    const auto u = update_pi(resp_from(g), PenaltyConfig{}, 4);
    CHECK(u.pi(0) == doctest::Approx(1.8 / 4));
    CHECK(u.pi(1) == doctest::Approx(2.2 / 4));
    CHECK(u.survivors.size() == 2);
  }
  SUBCASE("weak component pruned") {
    MatrixXd g(20, 2);
    g.col(0).setConstant(0.05);
    g.col(1).setConstant(0.95);
    PenaltyConfig pen;
    pen.lambda = 0.1;
    const auto u = update_pi(resp_from(g), pen, 20);
    CHECK(u.raw(0) == doctest::Approx(0.0));
    CHECK(u.raw(1) == doctest::Approx(1.25));
    REQUIRE(u.survivors.size() == 1);
    CHECK(u.survivors[0] == 1);
    CHECK(u.pi(0) == doctest::Approx(1.0));
  }
  SUBCASE("single component") {
    const auto u = update_pi(resp_from(MatrixXd::Ones(7, 1)), PenaltyConfig{0.2}, 7);
    CHECK(u.pi.size() == 1);
    CHECK(u.pi(0) == 1.0);
  }
  SUBCASE("never drops the last component") {
    MatrixXd g(10, 2);
    g.col(0).setConstant(0.5);
    g.col(1).setConstant(0.5);
    PenaltyConfig pen;
    pen.lambda = 0.3;
    CHECK_THROWS_AS(update_pi(resp_from(g), pen, 10), InputError);
    const auto u = update_pi(resp_from(g), pen, 10, true);
    CHECK(u.pi.size() >= 1);
    CHECK(u.pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("large-penalty form matches the closed form when both apply") {
    MatrixXd g(10, 3);
    g << MatrixXd::Random(10, 3).cwiseAbs();
    for (Index i = 0; i < 10; ++i) g.row(i) /= g.row(i).sum();
    PenaltyConfig pen;
    pen.lambda = 0.02;
    const auto a = update_pi(resp_from(g), pen, 10);
    const auto b = update_pi(resp_from(g), pen, 10, true);
    CHECK(a.survivors == b.survivors);
    CHECK((a.pi - b.pi).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("update_eta closed forms") {
  const VectorXd e = random_residuals(500, 4, 0.7);
  const Responsibilities one{MatrixXd::Ones(e.size(), 1)};
  const double ms = e.squaredNorm() / static_cast<double>(e.size());
  CHECK(update_eta(one, e, MoEPModel{{{2.0, 1.0, 1.0}}})(0) == doctest::Approx(1.0 / (2.0 * ms)).epsilon(1e-12));
  const double ma = e.cwiseAbs().mean();
  CHECK(update_eta(one, e, MoEPModel{{{1.0, 1.0, 1.0}}})(0) == doctest::Approx(1.0 / ma).epsilon(1e-12));
}

TEST_CASE("update_eta by hand on a 3x3 toy") {
  VectorXd e(9);
  e << 0.3, -1.2, 0.05, 2.0, -0.4, 0.9, -0.01, 1.5, -0.6;
  MatrixXd g(9, 2);
  for (Index i = 0; i < 9; ++i) {
    g(i, 0) = 0.1 + 0.08 * static_cast<double>(i);
    g(i, 1) = 1.0 - g(i, 0);
  }
  const MoEPModel model{{{0.5, 1.0, 0.5}, {1.5, 1.0, 0.5}}};
  const VectorXd eta = update_eta(Responsibilities{g}, e, model);
  for (int k = 0; k < 2; ++k) {
    double num = 0.0;
    double den = 0.0;
    for (Index i = 0; i < 9; ++i) {
      num += g(i, k);
      den += g(i, k) * std::pow(std::abs(e(i)), model.components[static_cast<std::size_t>(k)].p);
    }
    CHECK(eta(k) == doctest::Approx(num / (model.components[static_cast<std::size_t>(k)].p * den)).epsilon(1e-13));
  }
}

TEST_CASE("update_eta clamps") {
  MixtureDiagnostics diag;
  const VectorXd eta = update_eta(Responsibilities{MatrixXd::Ones(5, 1)}, VectorXd::Zero(5), MoEPModel{{{2.0, 1.0, 1.0}}}, &diag);
  CHECK(eta(0) == kEtaMax);
  CHECK(diag.eta_clamped == 1);
}

TEST_CASE("unpenalized EM recovers a single EP precision") {
  const EPParams<double> truth{1.5, 2.5};
  const auto xs = ep_sample(10000, truth, 77);
  const VectorXd e = Eigen::Map<const VectorXd>(xs.data(), static_cast<Index>(xs.size()));
  MoEPModel model{{{1.5, 0.1, 1.0}}};
  for (int it = 0; it < 5; ++it) {
    const auto r = e_step(e, model);
    const auto pi = update_pi(r, PenaltyConfig{}, e.size());
    model.components[0].eta = update_eta(r, e, model)(0);
    model.components[0].pi = pi.pi(0);
  }
  CHECK(std::abs(model.components[0].eta - truth.eta) / truth.eta < 0.05);
}

TEST_CASE("penalized log-likelihood") {
  const VectorXd e = random_residuals(30, 5);
  SUBCASE("gaussian sum") {
    const double eta = 0.8;
    double expected = 0.0;
    const double var = 1.0 / (2.0 * eta);
    for (Index i = 0; i < e.size(); ++i) expected += -0.5 * std::log(2 * std::numbers::pi * var) - e(i) * e(i) / (2 * var);
    CHECK(penalized_log_likelihood(e, MoEPModel{{{2.0, eta, 1.0}}}, PenaltyConfig{}, 6, 30) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("penalty vanishes at zero weight") {
    PenaltyConfig pen;
    pen.lambda = 0.1;
    const MoEPModel with_zero{{{2.0, 1.0, 1.0}, {1.0, 1.0, 0.0}}};
    const MoEPModel alone{{{2.0, 1.0, 1.0}}};
    CHECK(mixing_penalty(with_zero, pen, 6, 30) == doctest::Approx(mixing_penalty(alone, pen, 6, 30)));
  }
  SUBCASE("penalty scales") {
    PenaltyConfig pen;
    pen.lambda = 0.1;
    CHECK(pen.coefficient(6, 30) == doctest::Approx(3.0));
    pen.scale = PenaltyScale::columns;
    CHECK(pen.coefficient(6, 30) == doctest::Approx(0.6));
  }
  SUBCASE("2x2 toy against 50-digit summation") {
    const std::vector<double> r{0.3, -1.1, 0.02, 2.4};
    const std::vector<oracle::Component> comps{{0.5, 1.7, 0.35}, {2.0, 0.6, 0.65}};
    MoEPModel model;
    for (const auto& c : comps) model.components.push_back({c.p, c.eta, c.pi});
    PenaltyConfig pen;
    pen.lambda = 0.05;
    const VectorXd ev = Eigen::Map<const VectorXd>(r.data(), 4);
    using oracle::Real;
    Real penalty = 0;
    for (const auto& c : comps) penalty += Real(2) * log((Real(pen.epsilon) + c.pi) / Real(pen.epsilon));
    penalty *= Real(pen.coefficient(2, 4));
    const double expected = static_cast<double>(oracle::mixture_loglik(r, comps) - penalty);
    CHECK(penalized_log_likelihood(ev, model, pen, 2, 4) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("restrict_components") {
  MatrixXd g = MatrixXd::Random(5, 3);
  const auto r = restrict_components(Responsibilities{g}, {0, 2});
  CHECK(r.components() == 2);
  CHECK(r.gamma.col(1) == g.col(2));
}
