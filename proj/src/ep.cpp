#include "pmoep/ep.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace pmoep {

double ep_abs_moment(int k, const EPParams<double>& params) {
  params.validate();
  if (k < 1) throw InputError("ep_abs_moment: order must be >= 1");
  const double p = params.p;
  const double log_moment = k * std::log(params.scale()) + std::lgamma((k + 1.0) / p) - std::lgamma(1.0 / p);
  if (!std::isfinite(log_moment) || log_moment > std::log(std::numeric_limits<double>::max())) {
    throw NumericalError("ep_abs_moment: E|X|^" + std::to_string(k) + " overflows for p=" + std::to_string(p) +
                         ", eta=" + std::to_string(params.eta));
  }
  return std::exp(log_moment);
}

std::vector<double> ep_sample(std::size_t n, const EPParams<double>& params, std::uint64_t seed, EPSampler sampler) {
  params.validate();
  if (n == 0) throw InputError("ep_sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = ep_draw(rng, params, sampler);
  return out;
}

}  // namespace pmoep
