// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "../unit/oracle.hpp"

#include "pmoep/alm.hpp"
#include "pmoep/bench.hpp"
#include "pmoep/em.hpp"
#include "pmoep/ep.hpp"
#include "pmoep/mrf.hpp"
#include "pmoep/select.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

using namespace pmoep;

namespace {

constexpr std::uint64_t kMasterSeed = 1;
constexpr int kSeeds = 10;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void run(const char* name, const std::function<Outcome()>& criterion) {
  const auto start = std::chrono::steady_clock::now();
  const Outcome out = criterion();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s %-4s %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!out.pass) ++failures;
}

SyntheticData regime_data(NoiseRegime regime, int replicate) {
  SyntheticSpec spec;
  spec.regime = regime;
  spec.seed = splitmix64(kMasterSeed + static_cast<std::uint64_t>(replicate));
  return generate_synthetic(spec);
}

EmConfig preset_config(NoiseRegime regime, const SyntheticSpec& spec, int restarts) {
  const RegimePreset preset = regime_preset(regime);
  EmConfig c;
  c.rank = spec.r;
  c.p_candidates = preset.p_candidates;
  c.penalty.lambda = preset.lambda;
  c.restarts = restarts;
  c.seed = splitmix64(spec.seed ^ 0x5eed);
  return c;
}

// PMoEP and SVD fits at benchmark scale, shared by the recovery criteria.
struct RegimeRuns {
  std::vector<EvalReport> pmoep;
  std::vector<EvalReport> svd;
  std::vector<MoEPModel> models;
};

std::map<NoiseRegime, RegimeRuns> cache;

const RegimeRuns& regime_runs(NoiseRegime regime) {
  auto it = cache.find(regime);
  if (it != cache.end()) return it->second;
  RegimeRuns runs;
  for (int s = 0; s < kSeeds; ++s) {
    const SyntheticData data = regime_data(regime, s);
    SyntheticSpec spec;
    spec.seed = splitmix64(kMasterSeed + static_cast<std::uint64_t>(s));
    const EmResult fit = fit_pmoep(data.observed, preset_config(regime, spec, 20));
    runs.pmoep.push_back(evaluate(fit.factors, data));
    runs.svd.push_back(evaluate(svd_baseline(data.observed, spec.r), data));
    runs.models.push_back(fit.model);
  }
  return cache.emplace(regime, std::move(runs)).first->second;
}

std::vector<double> column(const std::vector<EvalReport>& reports, int c) {
  std::vector<double> out;
  for (const auto& r : reports) out.push_back(r.C(c));
  return out;
}

struct VideoRun {
  EmResult plain;
  EmResult mrf;
  double f_plain;
  double f_mrf;
};

std::vector<VideoRun> video_runs;

const std::vector<VideoRun>& video() {
  if (!video_runs.empty()) return video_runs;
  for (int s = 0; s < 5; ++s) {
    VideoSpec spec;
    spec.seed = splitmix64(kMasterSeed + 100 + static_cast<std::uint64_t>(s));
    const VideoData v = generate_video(spec);
    EmConfig c;
    c.rank = spec.r;
    c.p_candidates = {0.5, 2.0};
    c.penalty.lambda = 0.005;
    c.warmup_iterations = 30;
    c.restarts = 3;
    c.seed = splitmix64(spec.seed ^ 0x5eed);
    const GridShape grid{spec.height, spec.width, spec.frames};
    VideoRun run{fit_pmoep(v.observed, c), fit_pmoep_mrf(v.observed, grid, c, MrfConfig{}), 0.0, 0.0};
    run.f_plain = fmeasure(heavy_component_map(v.observed, run.plain.model, run.plain.resp), v.foreground).fmeasure;
    run.f_mrf = fmeasure(heavy_component_map(v.observed, run.mrf.model, run.mrf.resp), v.foreground).fmeasure;
    video_runs.push_back(std::move(run));
  }
  return video_runs;
}

Outcome monotone_ascent() {
  int checked = 0;
  int bad = 0;
  std::string where;
  for (NoiseRegime regime : kAllRegimes) {
    for (int s = 0; s < kSeeds; ++s) {
      const SyntheticData data = regime_data(regime, s);
      SyntheticSpec spec;
      spec.seed = splitmix64(kMasterSeed + static_cast<std::uint64_t>(s));
      const EmResult fit = fit_pmoep(data.observed, preset_config(regime, spec, 1));
      ++checked;
      if (!objective_monotone_check(fit.objective_trace).monotone) {
        ++bad;
        where += " " + std::string(regime_name(regime)) + "/" + std::to_string(s);
      }
    }
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) + " traces non-decreasing" + where};
}

Outcome monotone_lower_bound() {
  int bad = 0;
  for (const auto& run : video()) bad += objective_monotone_check(run.mrf.objective_trace).monotone ? 0 : 1;
  return {bad == 0, std::to_string(5 - bad) + "/5 video lower-bound traces non-decreasing"};
}

Outcome tau_zero_reduction() {
  struct Case {
    NoiseRegime regime;
    std::uint64_t seed;
  };
  int equal = 0;
  const Case cases[] = {{NoiseRegime::gaussian, 11}, {NoiseRegime::sparse, 12}, {NoiseRegime::mixture2, 13}};
  for (const Case& c : cases) {
    SyntheticSpec spec;
    spec.regime = c.regime;
    spec.seed = c.seed;
    const SyntheticData data = generate_synthetic(spec);
    EmConfig config = preset_config(c.regime, spec, 2);
    const GridShape grid{8, 5, 20};
    MrfConfig mrf;
    mrf.tau = 0.0;
    const EmResult a = fit_pmoep(data.observed, config);
    const EmResult b = fit_pmoep_mrf(data.observed, grid, config, mrf);
    bool same = a.objective_trace == b.objective_trace && a.factors.U == b.factors.U && a.factors.V == b.factors.V &&
                a.model.size() == b.model.size();
    for (std::size_t k = 0; same && k < a.model.size(); ++k) {
      const auto& x = a.model.components[k];
      const auto& y = b.model.components[k];
      same = x.p == y.p && x.eta == y.eta && x.pi == y.pi;
    }
    equal += same ? 1 : 0;
  }
  return {equal == 3, std::to_string(equal) + "/3 configurations bitwise identical"};
}

Outcome sparse_recovery() {
  const RegimeRuns& runs = regime_runs(NoiseRegime::sparse);
  const double c5 = median(column(runs.pmoep, 5));
  const double c3 = median(column(runs.pmoep, 3));
  return {c5 <= 1e-3 && c3 <= 1e-2, fmt("median C5=%.3e (<=1e-3) C3=%.3e (<=1e-2)", c5, c3)};
}

Outcome regime_ordering() {
  bool pass = true;
  std::string detail;
  for (NoiseRegime regime : {NoiseRegime::sparse, NoiseRegime::mixture1, NoiseRegime::ep}) {
    const RegimeRuns& runs = regime_runs(regime);
    const double ours = median(column(runs.pmoep, 5));
    const double svd = median(column(runs.svd, 5));
    pass = pass && 5.0 * ours < svd;
    detail += std::string(regime_name(regime)) + fmt(" %.3e vs %.3e (%.3gx); ", ours, svd, svd / ours);
  }
  const RegimeRuns& g = regime_runs(NoiseRegime::gaussian);
  const double ours = median(column(g.pmoep, 5));
  const double svd = median(column(g.svd, 5));
  const double rel = std::abs(ours - svd) / svd;
  pass = pass && rel <= 0.1;
  detail += "gaussian" + fmt(" %.3e vs %.3e (%.1f%% off)", ours, svd, 100.0 * rel);
  return {pass, detail};
}

Outcome model_selection() {
  bool pass = true;
  std::string detail;
  for (auto [regime, shape] : {std::pair{NoiseRegime::gaussian, 2.0}, std::pair{NoiseRegime::ep, 0.2}}) {
    int hits = 0;
    std::string ks;
    for (int s = 0; s < kSeeds; ++s) {
      const SyntheticData data = regime_data(regime, s);
      SyntheticSpec spec;
      spec.seed = splitmix64(kMasterSeed + static_cast<std::uint64_t>(s));
      EmConfig base = preset_config(regime, spec, 5);
      base.p_candidates = kSelectionCandidates;
      const SelectionReport report = select_lambda(data.observed, base, kLambdaGrid);
      const SelectionRecord& best = report.best();
      const bool hit = best.ok() && best.k_final() == 1 && best.result->model.components[0].p == shape;
      hits += hit ? 1 : 0;
      ks += std::to_string(best.k_final());
    }
    pass = pass && hits >= 7;
    detail += std::string(regime_name(regime)) + " " + std::to_string(hits) + "/10 (K_final " + ks + "); ";
  }
  return {pass, detail};
}

Outcome density_recovery() {
  bool pass = true;
  std::string detail;
  for (NoiseRegime regime : {NoiseRegime::gaussian, NoiseRegime::ep, NoiseRegime::laplace}) {
    const RegimeRuns& runs = regime_runs(regime);
    std::vector<double> kl;
    for (std::size_t s = 0; s < runs.models.size(); ++s) {
      kl.push_back(density_recovery_divergence(runs.models[s], regime_noise(regime), 100000, 77 + s));
    }
    const double m = median(kl);
    pass = pass && m <= 0.05;
    detail += std::string(regime_name(regime)) + fmt(" KL=%.4f; ", m);
  }
  return {pass, detail + "bound 0.05"};
}

Outcome prox_oracle() {
  std::mt19937_64 rng(8128);
  int bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto inst = oracle::random_prox_instance(rng);
    const double s = prox_scalar(inst.t, inst.terms, inst.rho);
    const double err = std::abs(s - oracle::prox_grid(inst.t, inst.terms, inst.rho, 1e-4));
    worst = std::max(worst, err);
    bad += err > 1e-6 ? 1 : 0;
  }
  return {bad == 0, std::to_string(1000 - bad) + "/1000 within 1e-6" + fmt(", worst %.2e", worst)};
}

Outcome sampler_moments() {
  constexpr std::size_t n = 100000;
  bool pass = true;
  std::string detail;
  const auto empirical = [](const std::vector<double>& x, int k) {
    double sum = 0.0;
    for (double v : x) sum += std::pow(std::abs(v), k);
    return sum / static_cast<double>(x.size());
  };
  for (double p : {0.2, 0.5, 1.0, 2.0}) {
    const EPParams<double> params{p, 1.0};
    const auto x = ep_sample(n, params, 31);
    for (int k : {1, 2}) {
      const double rel = std::abs(empirical(x, k) - ep_abs_moment(k, params)) / ep_abs_moment(k, params);
      pass = pass && rel <= 0.05;
      detail += fmt("p=%.1f k=%.0f %.1f%%; ", p, k, 100.0 * rel);
    }
    if (p < 1.0) {
      const double primary = empirical(x, 1);
      const double slice = empirical(ep_sample(n, params, 32, EPSampler::gamma_mixture_slice), 1);
      const double analytic = ep_abs_moment(1, params);
      const double rel_slice = std::abs(slice - analytic) / analytic;
      const double rel_paths = std::abs(slice - primary) / primary;
      pass = pass && rel_slice <= 0.05 && rel_paths <= 0.05;
      detail += fmt("p=%.1f slice %.1f%% paths %.1f%%; ", p, 100.0 * rel_slice, 100.0 * rel_paths);
    }
  }
  return {pass, detail + "bound 5%"};
}

Outcome weighted_l2_equivalence() {
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> normal;
  const auto gaussian = [&](Index r, Index c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&] { return normal(rng); })); };
  int bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Index m = 15 + 5 * (i % 4);
    const Index n = 10 + 2 * (i % 5);
    const Index r = 1 + i % 3;
    const MatrixXd Y = gaussian(m, r) * gaussian(r, n) + 0.1 * gaussian(m, n);
    Mask mask(m, n);
    std::bernoulli_distribution keep(0.8);
    for (Index j = 0; j < mask.size(); ++j) mask(j) = keep(rng);
    const ObservedMatrix y(Y, mask);
    ProxWeights w;
    w.coeff = gaussian(y.observed_count(), 1 + i % 3).cwiseAbs();
    w.exponents = VectorXd::Constant(w.coeff.cols(), 2.0);
    const FactorPair init{gaussian(m, r), gaussian(n, r)};
    const double l2 = weighted_objective(y, w, solve_weighted_l2(y, quadratic_weight_matrix(y, w), r, init).factors.product());
    const double alm = weighted_objective(y, w, solve_weighted_lrmf(y, w, r, init).factors.product());
    const double rel = std::abs(alm - l2) / l2;
    worst = std::max(worst, rel);
    bad += rel > 1e-4 ? 1 : 0;
  }
  return {bad == 0, std::to_string(20 - bad) + "/20 within 1e-4" + fmt(", worst %.2e", worst)};
}

Outcome mrf_fmeasure() {
  std::vector<double> plain;
  std::vector<double> mrf;
  for (const auto& run : video()) {
    plain.push_back(run.f_plain);
    mrf.push_back(run.f_mrf);
  }
  const double a = median(plain);
  const double b = median(mrf);
  return {b >= a, fmt("median F mrf=%.3f plain=%.3f", b, a)};
}

}  // namespace

int main() {
  run("C1", monotone_ascent);
  run("C2", monotone_lower_bound);
  run("C3", tau_zero_reduction);
  run("C4", sparse_recovery);
  run("C5", regime_ordering);
  run("C6", model_selection);
  run("C7", density_recovery);
  run("C8", prox_oracle);
  run("C9", sampler_moments);
  run("C10", weighted_l2_equivalence);
  run("MRF", mrf_fmeasure);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
