#ifndef PMOEP_EP_HPP
#define PMOEP_EP_HPP

#include "pmoep/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace pmoep {

/// Zero-mean exponential power distribution
///
///   f(x) = p * eta^(1/p) / (2 Gamma(1/p)) * exp(-eta |x|^p).
///
/// p = 1 is the Laplace law with rate eta, p = 2 the Gaussian with variance
/// 1 / (2 eta). Two alternative scale parameterizations are supported:
/// sigma with eta = 1 / (p sigma^p), and tau with eta = tau^-p.
template <typename Scalar = double>
struct EPParams {
  Scalar p{2};
  Scalar eta{1};

  static EPParams from_sigma(Scalar p, Scalar sigma) {
    using std::pow;
    return {p, Scalar(1) / (p * pow(sigma, p))};
  }

  static EPParams from_scale(Scalar p, Scalar tau) {
    using std::pow;
    return {p, Scalar(1) / pow(tau, p)};
  }

  Scalar sigma() const {
    using std::pow;
    return pow(Scalar(1) / (p * eta), Scalar(1) / p);
  }

  Scalar scale() const {
    using std::pow;
    return pow(eta, Scalar(-1) / p);
  }

  bool valid() const {
    using std::isfinite;
    return isfinite(p) && isfinite(eta) && p > 0 && eta > 0;
  }

  void validate() const {
    if (!valid()) {
      throw InputError("exponential power parameters out of domain (p=" + std::to_string(double(p)) +
                       ", eta=" + std::to_string(double(eta)) + ")");
    }
  }
};

/// log of the normalizing constant p eta^(1/p) / (2 Gamma(1/p)).
template <typename Scalar>
Scalar ep_log_normalizer(Scalar p, Scalar eta) {
  using std::log;
  using std::lgamma;
  return log(p) + log(eta) / p - std::numbers::ln2_v<Scalar> - lgamma(Scalar(1) / p);
}

template <typename Scalar>
Scalar ep_log_pdf(Scalar x, const EPParams<Scalar>& params) {
  using std::abs;
  using std::isfinite;
  using std::pow;
  params.validate();
  if (!isfinite(x)) throw InputError("ep_log_pdf: non-finite argument");
  return ep_log_normalizer(params.p, params.eta) - params.eta * pow(abs(x), params.p);
}

/// E|X|^k = tau^k Gamma((k+1)/p) / Gamma(1/p).
double ep_abs_moment(int k, const EPParams<double>& params);

/// Variance of EP(0, p, eta), i.e. the second absolute moment.
inline double ep_variance(const EPParams<double>& params) { return ep_abs_moment(2, params); }

enum class EPSampler {
  gamma_power,          // |X| = tau * G^(1/p), G ~ Gamma(1/p, 1); exact for every p > 0
  gamma_mixture_slice,  // 0 < p < 1 only: gamma-mixture width plus slice-sampled triangular kernel
};

// Slice-sampling steps per draw for the triangular conditional.
inline constexpr int kSliceSteps = 20;

/// One draw from EP(0, p, eta).
template <typename Rng>
double ep_draw(Rng& rng, const EPParams<double>& params, EPSampler sampler = EPSampler::gamma_power) {
  const double p = params.p;
  const double tau = params.scale();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (sampler == EPSampler::gamma_power) {
    std::gamma_distribution<double> gamma(1.0 / p, 1.0);
    const double g = gamma(rng);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    return sign * tau * std::pow(g, 1.0 / p);
  }
  if (!(p < 1.0)) throw InputError("gamma-mixture slice sampler requires 0 < p < 1");
  // Width w ~ (1+p)/2 Ga(2 + 1/p) + (1-p)/2 Ga(1 + 1/p).
  const bool first = unit(rng) < 0.5 * (1.0 + p);
  std::gamma_distribution<double> gamma(first ? 2.0 + 1.0 / p : 1.0 + 1.0 / p, 1.0);
  const double half_width = tau * std::pow(gamma(rng), 1.0 / p);
  // Slice sampling from the kernel (1 - |b| / half_width)_+ started at its mode.
  double beta = 0.0;
  for (int step = 0; step < kSliceSteps; ++step) {
    const double height = unit(rng) * (1.0 - std::abs(beta) / half_width);
    const double bound = half_width * (1.0 - height);
    beta = bound * (2.0 * unit(rng) - 1.0);
  }
  return beta;
}

std::vector<double> ep_sample(std::size_t n, const EPParams<double>& params, std::uint64_t seed,
                              EPSampler sampler = EPSampler::gamma_power);

}  // namespace pmoep

#endif  // PMOEP_EP_HPP
