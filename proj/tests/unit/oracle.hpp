#ifndef PMOEP_TESTS_ORACLE_HPP
#define PMOEP_TESTS_ORACLE_HPP

// Independent reference computations in 50-digit arithmetic.

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "pmoep/alm.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline Real ep_pdf(Real x, Real p, Real eta) {
  using boost::multiprecision::abs;
  using boost::multiprecision::exp;
  using boost::multiprecision::pow;
  return p * pow(eta, 1 / p) / (2 * boost::math::tgamma(1 / p)) * exp(-eta * pow(abs(x), p));
}

struct Component {
  double p, eta, pi;
};

inline Real mixture_loglik(const std::vector<double>& residuals, const std::vector<Component>& comps) {
  using boost::multiprecision::log;
  Real total = 0;
  for (double e : residuals) {
    Real s = 0;
    for (const auto& c : comps) s += Real(c.pi) * ep_pdf(Real(e), Real(c.p), Real(c.eta));
    total += log(s);
  }
  return total;
}

// Minimizer of 0.5 (t - s)^2 + sum c |s|^p / rho by a dense grid on
// [-2|t|, 2|t|] followed by golden-section refinement around the best cell.
template <typename Terms>
double prox_grid(double t, const Terms& terms, double rho, double step) {
  const auto f = [&](double s) {
    double v = 0.5 * (t - s) * (t - s);
    for (const auto& term : terms) v += term.c * std::pow(std::abs(s), term.p) / rho;
    return v;
  };
  const double span = 2.0 * std::abs(t);
  double best = 0.0;
  double best_value = f(0.0);
  for (double s = -span; s <= span; s += step) {
    const double v = f(s);
    if (v < best_value) {
      best_value = v;
      best = s;
    }
  }
  double lo = best - step;
  double hi = best + step;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int i = 0; i < 200; ++i) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (f(a) < f(b)) hi = b;
    else lo = a;
  }
  double out = 0.0;
  for (double s : {best, 0.5 * (lo + hi)}) {
    if (f(s) < f(out)) out = s;
  }
  return out;
}

// Random prox instance: t in [-5, 5], one to three terms with c in [0, 3]
// and p drawn from the benchmark shapes, rho log-uniform in [0.1, 10].
struct ProxInstance {
  double t;
  std::vector<pmoep::ProxTerm<double>> terms;
  double rho;
};

template <typename Rng>
ProxInstance random_prox_instance(Rng& rng) {
  static constexpr double shapes[] = {0.2, 0.5, 1.0, 1.5, 2.0};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ProxInstance out;
  out.t = 10.0 * unit(rng) - 5.0;
  const int count = 1 + static_cast<int>(3.0 * unit(rng));
  for (int l = 0; l < count; ++l) {
    out.terms.push_back({3.0 * unit(rng), shapes[static_cast<int>(5.0 * unit(rng)) % 5]});
  }
  out.rho = std::pow(10.0, 2.0 * unit(rng) - 1.0);
  return out;
}

}  // namespace oracle

#endif  // PMOEP_TESTS_ORACLE_HPP
