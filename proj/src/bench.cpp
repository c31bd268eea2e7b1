#include "pmoep/bench.hpp"

#include "pmoep/alm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace pmoep {

std::string_view regime_name(NoiseRegime regime) {
  switch (regime) {
    case NoiseRegime::gaussian:
      return "gaussian";
    case NoiseRegime::ep:
      return "ep";
    case NoiseRegime::laplace:
      return "laplace";
    case NoiseRegime::sparse:
      return "sparse";
    case NoiseRegime::mixture1:
      return "mixture1";
    case NoiseRegime::mixture2:
      return "mixture2";
  }
  return "unknown";
}

std::optional<NoiseRegime> parse_regime(std::string_view name) {
  for (auto regime : kAllRegimes) {
    if (regime_name(regime) == name) return regime;
  }
  return std::nullopt;
}

double NoiseLaw::log_pdf(double x) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  switch (kind) {
    case Kind::zero:
      return x == 0.0 ? std::numeric_limits<double>::infinity() : kNegInf;
    case Kind::gaussian:
      return -0.5 * std::log(2.0 * std::numbers::pi * a) - x * x / (2.0 * a);
    case Kind::laplace:
      return -std::log(2.0 * a) - std::abs(x) / a;
    case Kind::exp_power:
      return ep_log_pdf(x, EPParams<double>{a, b});
    case Kind::uniform:
      return (x >= a && x <= b) ? -std::log(b - a) : kNegInf;
  }
  return kNegInf;
}

double NoiseModel::log_pdf(double x) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (const auto& block : blocks) {
    if (block.fraction <= 0.0) continue;
    const double t = std::log(block.fraction) + block.law.log_pdf(x);
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (!std::isfinite(best)) return best;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - best);
  return best + std::log(sum);
}

NoiseModel regime_noise(NoiseRegime regime) {
  // EP laws are given through sigma: eta = 1 / (p sigma^p).
  const auto ep_sigma = [](double p, double sigma) {
    const auto params = EPParams<double>::from_sigma(p, sigma);
    return NoiseLaw::exp_power(params.p, params.eta);
  };
  switch (regime) {
    case NoiseRegime::gaussian:
      return {{{1.0, NoiseLaw::gaussian(0.04)}}};
    case NoiseRegime::ep:
      return {{{1.0, ep_sigma(0.2, 0.2)}}};
    case NoiseRegime::laplace:
      return {{{1.0, NoiseLaw::laplace(0.2)}}};
    case NoiseRegime::sparse:
      return {{{0.125, NoiseLaw::uniform(-20.0, 20.0)}, {0.875, NoiseLaw::zero()}}};
    case NoiseRegime::mixture1:
      return {{{0.25, NoiseLaw::uniform(-5.0, 5.0)},
               {0.25, NoiseLaw::gaussian(0.04)},
               {0.50, NoiseLaw::gaussian(0.01)}}};
    case NoiseRegime::mixture2:
      return {{{0.375, ep_sigma(0.5, 0.1)}, {0.50, NoiseLaw::laplace(0.3)}, {0.125, NoiseLaw::gaussian(0.01)}}};
  }
  return {};
}

VideoData generate_video(const VideoSpec& spec) {
  if (spec.height < 1 || spec.width < 1 || spec.frames < 1 || spec.r < 1) throw InputError("video dimensions must be positive");
  if (spec.block < 1 || spec.block > std::min(spec.height, spec.width)) throw InputError("block must fit inside a frame");
  std::mt19937_64 rng(splitmix64(spec.seed ^ 0x766964656fULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index m = spec.height * spec.width;
  const Index n = spec.frames;
  const MatrixXd U = MatrixXd::NullaryExpr(m, spec.r, [&] { return normal(rng); });
  const MatrixXd V = MatrixXd::NullaryExpr(n, spec.r, [&] { return normal(rng); });

  VideoData out;
  out.Y_gt = U * V.transpose();
  out.foreground = Mask::Constant(m, n, false);
  const NoiseLaw light = NoiseLaw::gaussian(spec.background_variance);
  const NoiseLaw heavy = NoiseLaw::exp_power(spec.block_p, spec.block_eta);
  MatrixXd y = out.Y_gt;
  for (Index f = 0; f < n; ++f) {
    for (Index bx = 0; bx < spec.block; ++bx) {
      for (Index by = 0; by < spec.block; ++by) {
        const Index row = (f + by) % spec.height;
        const Index col = (f + bx) % spec.width;
        out.foreground(row + col * spec.height, f) = true;
      }
    }
    for (Index i = 0; i < m; ++i) y(i, f) += (out.foreground(i, f) ? heavy : light).draw(rng);
  }
  out.observed = ObservedMatrix(std::move(y));
  return out;
}

MatrixXd heavy_component_map(const ObservedMatrix& y, const MoEPModel& model, const Responsibilities& resp) {
  MatrixXd out = MatrixXd::Zero(y.rows(), y.cols());
  if (model.size() == 0) return out;
  std::size_t heavy = 0;
  double widest = -1.0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const auto& c = model.components[k];
    const double v = ep_variance({c.p, c.eta});
    if (v > widest) {
      widest = v;
      heavy = k;
    }
  }
  const auto& omega = y.omega();
  for (std::size_t t = 0; t < omega.size(); ++t) {
    out.data()[omega[t]] = resp.gamma(static_cast<Index>(t), static_cast<Index>(heavy));
  }
  return out;
}

RegimePreset regime_preset(NoiseRegime regime) {
  switch (regime) {
    case NoiseRegime::gaussian:
      return {{0.5, 1.0, 1.5, 2.0}, 0.15};
    case NoiseRegime::ep:
      return {{0.2, 0.5, 1.0, 1.5, 2.0, 2.0}, 0.3};
    case NoiseRegime::laplace:
      return {{0.5, 1.0, 1.5, 2.0}, 0.1};
    case NoiseRegime::sparse:
      return {{2.0, 2.0, 2.0, 2.0}, 0.005};
    case NoiseRegime::mixture1:
      return {{1.0, 1.5, 2.0, 2.0}, 0.005};
    case NoiseRegime::mixture2:
      return {{0.5, 2.0, 2.0, 2.0}, 0.005};
  }
  return {{0.5, 1.0, 1.5, 2.0}, 0.1};
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.m < 1 || spec.n < 1 || spec.r < 1 || spec.r > std::min(spec.m, spec.n)) {
    throw InputError("generate_synthetic: invalid shape or rank");
  }
  if (!(spec.missing_fraction >= 0.0 && spec.missing_fraction < 1.0)) {
    throw InputError("generate_synthetic: missing fraction must lie in [0, 1)");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticData data;
  data.U_gt = MatrixXd::NullaryExpr(spec.m, spec.r, [&]() { return normal(rng); });
  data.V_gt = MatrixXd::NullaryExpr(spec.n, spec.r, [&]() { return normal(rng); });
  data.Y_gt = data.U_gt * data.V_gt.transpose();

  const Index total = spec.m * spec.n;
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto missing = static_cast<Index>(std::floor(spec.missing_fraction * static_cast<double>(total)));
  Mask mask = Mask::Constant(spec.m, spec.n, true);
  for (Index k = 0; k < missing; ++k) mask(order[static_cast<std::size_t>(k)]) = false;

  std::vector<Index> observed;
  for (Index idx = 0; idx < total; ++idx) {
    if (mask(idx)) observed.push_back(idx);
  }
  std::shuffle(observed.begin(), observed.end(), rng);

  const NoiseModel noise = regime_noise(spec.regime);
  data.noise = MatrixXd::Zero(spec.m, spec.n);
  data.source = Eigen::MatrixXi::Constant(spec.m, spec.n, -1);
  std::size_t cursor = 0;
  for (std::size_t b = 0; b < noise.blocks.size(); ++b) {
    const bool last = b + 1 == noise.blocks.size();
    const std::size_t count =
        last ? observed.size() - cursor
             : static_cast<std::size_t>(std::floor(noise.blocks[b].fraction * static_cast<double>(observed.size())));
    for (std::size_t k = 0; k < count && cursor < observed.size(); ++k, ++cursor) {
      const Index idx = observed[cursor];
      data.noise(idx) = noise.blocks[b].law.draw(rng);
      data.source(idx) = static_cast<int>(b);
    }
  }
  MatrixXd y = data.Y_gt + data.noise;
  data.observed = ObservedMatrix(std::move(y), std::move(mask));
  return data;
}

EvalReport evaluate(const FactorPair& factors, const SyntheticData& truth) {
  const MatrixXd fitted = factors.product();
  if (fitted.rows() != truth.Y_gt.rows() || fitted.cols() != truth.Y_gt.cols()) {
    throw ShapeError("evaluate: factor shapes do not match the data");
  }
  const Eigen::ArrayXXd w = truth.observed.mask().cast<double>();
  const Eigen::ArrayXXd fit_obs = w * (truth.observed.values() - fitted).array();
  const Eigen::ArrayXXd fit_gt = (truth.Y_gt - fitted).array();
  EvalReport report;
  report.c[0] = fit_obs.abs().sum();
  report.c[1] = std::sqrt(fit_obs.square().sum());
  report.c[2] = fit_gt.abs().sum();
  report.c[3] = std::sqrt(fit_gt.square().sum());
  report.c[4] = subspace_angle(truth.U_gt, factors.U);
  report.c[5] = subspace_angle(truth.V_gt, factors.V);
  const auto rank_of = [](const MatrixXd& X) {
    Eigen::JacobiSVD<MatrixXd> svd(X);
    svd.setThreshold(1e-12);
    return svd.rank();
  };
  report.rank_deficient = rank_of(factors.U) < factors.U.cols() || rank_of(factors.V) < factors.V.cols();
  return report;
}

FMeasure fmeasure(const MatrixXd& detected, const Mask& truth, std::size_t max_candidates) {
  if (detected.rows() != truth.rows() || detected.cols() != truth.cols()) throw ShapeError("fmeasure: shape mismatch");
  const auto positives = static_cast<double>(truth.count());
  if (positives == 0.0) throw InputError("fmeasure: ground-truth support is empty");
  std::vector<double> values(static_cast<std::size_t>(detected.size()));
  for (Index i = 0; i < detected.size(); ++i) values[static_cast<std::size_t>(i)] = std::abs(detected(i));
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> candidates;
  if (values.size() <= max_candidates) {
    candidates = values;
  } else {
    for (std::size_t k = 0; k < max_candidates; ++k) {
      candidates.push_back(values[k * (values.size() - 1) / (max_candidates - 1)]);
    }
  }
  FMeasure best;
  best.fmeasure = -1.0;
  for (double threshold : candidates) {
    double tp = 0.0;
    double fp = 0.0;
    for (Index i = 0; i < detected.size(); ++i) {
      if (std::abs(detected(i)) >= threshold) {
        if (truth(i)) {
          tp += 1.0;
        } else {
          fp += 1.0;
        }
      }
    }
    const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double recall = tp / positives;
    const double f = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (f > best.fmeasure) best = {precision, recall, f, threshold};
  }
  return best;
}

double density_recovery_divergence(const MoEPModel& fitted, const NoiseModel& truth, std::size_t samples,
                                   std::uint64_t seed) {
  if (samples == 0) throw InputError("density_recovery_divergence: need at least one sample");
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double x = truth.draw(rng);
    total += truth.log_pdf(x) - fitted.log_pdf(x);
  }
  return total / static_cast<double>(samples);
}

DensityCurve density_curve(const MoEPModel& fitted, const NoiseModel& truth, double lo, double hi, std::size_t points) {
  DensityCurve curve;
  for (std::size_t k = 0; k < points; ++k) {
    const double x = points > 1 ? lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1) : lo;
    curve.x.push_back(x);
    curve.fitted.push_back(std::exp(fitted.log_pdf(x)));
    const double t = truth.log_pdf(x);
    curve.truth.push_back(std::isfinite(t) ? std::exp(t) : 0.0);
  }
  return curve;
}

FactorPair svd_baseline(const ObservedMatrix& y, Index rank, const SvdBaselineOptions& options) {
  MatrixXd filled = y.values();
  const Mask& mask = y.mask();
  FactorPair f = factor_step(filled, rank);
  if (mask.all()) return f;
  for (int it = 0; it < options.max_iterations; ++it) {
    const MatrixXd fit = f.product();
    const MatrixXd next = mask.select(y.values(), fit);
    const double change = (next - filled).norm();
    const double scale = std::max(filled.norm(), 1e-300);
    filled = next;
    f = factor_step(filled, rank);
    if (change <= options.tolerance * scale) break;
  }
  return f;
}

}  // namespace pmoep
