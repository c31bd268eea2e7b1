#include "pmoep/bench.hpp"
#include "pmoep/em.hpp"
#include "pmoep/io.hpp"
#include "pmoep/mrf.hpp"
#include "pmoep/select.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pmoep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitShape = 3;
constexpr int kExitNumerical = 4;

// Config files are JSON objects keyed by long flag names. Arrays become
// comma-separated values. Flags given on the command line win.
void apply_config(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config not found: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!j.is_object()) throw InputError(path + ": expected a JSON object");
  const auto scalar = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = nullptr;
    try {
      opt = app->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw InputError(path + ": unknown key '" + key + "'");
    }
    if (opt->count() > 0 || key == "config") continue;
    std::string text;
    if (value.is_array()) {
      for (const auto& v : value) text += (text.empty() ? "" : ",") + scalar(v);
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else {
      text = scalar(value);
    }
    opt->add_result(text);
    try {
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw InputError(path + ": " + key + ": " + e.what());
    }
  }
}

void require(bool present, const char* flag) {
  if (!present) throw InputError(std::string(flag) + " is required");
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }
};

// Flags shared by the commands that run EM.
struct EmFlags {
  Index rank = 4;
  std::optional<std::size_t> k_start;
  std::string p;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  int restarts = 5;
  int max_outer = 100;
  double tol = 1e-6;
  int warmup = 10;

  void add(CLI::App* app) {
    app->add_option("--rank", rank, "Target rank")->capture_default_str();
    app->add_option("--k-start", k_start, "Initial number of components");
    app->add_option("--p", p, "Comma-separated shape candidates, one per component");
    app->add_option("--lambda", lambda, "Mixing-weight penalty");
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--restarts", restarts, "Random restarts")->capture_default_str();
    app->add_option("--max-outer", max_outer, "EM iteration cap")->capture_default_str();
    app->add_option("--tol", tol, "Relative objective tolerance")->capture_default_str();
    app->add_option("--warmup", warmup, "Unpenalized warm-up iterations")->capture_default_str();
  }

  // `fallback_p` applies when --p is absent and --k-start is absent or matches it.
  EmConfig config(const std::vector<double>& fallback_p, double fallback_lambda) const {
    EmConfig c;
    c.rank = rank;
    if (!p.empty()) {
      c.p_candidates = parse_real_list(p);
    } else if (k_start && *k_start != fallback_p.size()) {
      // Evenly spaced over [0.2, 2].
      c.p_candidates.clear();
      for (std::size_t k = 0; k < *k_start; ++k) {
        c.p_candidates.push_back(*k_start == 1 ? 2.0 : 0.2 + 1.8 * static_cast<double>(k) / static_cast<double>(*k_start - 1));
      }
    } else {
      c.p_candidates = fallback_p;
    }
    if (k_start && *k_start != c.p_candidates.size()) {
      throw InputError("--k-start " + std::to_string(*k_start) + " does not match " +
                       std::to_string(c.p_candidates.size()) + " shape candidates");
    }
    c.penalty.lambda = lambda.value_or(fallback_lambda);
    c.seed = seed;
    c.restarts = restarts;
    c.max_outer = max_outer;
    c.tol = tol;
    c.warmup_iterations = warmup;
    c.validate();
    return c;
  }
};

Json responsibility_summary(const EmResult& r) {
  Json j = Json::array();
  const VectorXd mass = r.resp.mass();
  const double total = std::max(mass.sum(), 1e-300);
  for (Index k = 0; k < mass.size(); ++k) {
    j.push_back({{"component", k}, {"mass", mass(k)}, {"fraction", mass(k) / total}});
  }
  return j;
}

void write_trace(const fs::path& path, const EmResult& r) {
  std::vector<double> t, value, k;
  for (std::size_t i = 0; i < r.objective_trace.size(); ++i) {
    t.push_back(static_cast<double>(i));
    value.push_back(r.objective_trace[i]);
    k.push_back(static_cast<double>(r.component_trace[i]));
  }
  write_columns_csv(path, {&t, &value, &k});
}

// Residual histogram (as a density) and the fitted mixture density over the
// same range.
void write_residual_density(const fs::path& dir, const ObservedMatrix& y, const EmResult& r, std::size_t bins) {
  const VectorXd e = y.residuals(r.factors.product());
  const double lo = e.minCoeff();
  const double hi = e.maxCoeff();
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  std::vector<double> center(bins), hist(bins, 0.0), fitted(bins);
  for (Index i = 0; i < e.size(); ++i) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((e(i) - lo) / width));
    hist[b] += 1.0 / (static_cast<double>(e.size()) * width);
  }
  for (std::size_t b = 0; b < bins; ++b) {
    center[b] = lo + (static_cast<double>(b) + 0.5) * width;
    fitted[b] = std::exp(r.model.log_pdf(center[b]));
  }
  write_columns_csv(dir / "residual_density.csv", {&center, &hist, &fitted});
}

RunManifest make_manifest(const std::string& command, std::uint64_t seed, Json config) {
  RunManifest m;
  m.command = command;
  m.version = PMOEP_VERSION;
  m.seed = seed;
  m.config = std::move(config);
  return m;
}

// fit ----------------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::optional<std::string> mask;
  std::string out;
  EmFlags em;
  bool mrf = false;
  std::string grid;
  double tau = 10.0;
  bool pixels_along_columns = false;
  bool spatial_only = false;
};

int cmd_fit(const FitArgs& a) {
  Stopwatch total;
  const ObservedMatrix y = load_observed(a.input, a.mask ? std::optional<fs::path>(*a.mask) : std::nullopt);
  const EmConfig config = a.em.config({0.5, 1.0, 1.5, 2.0}, 0.1);

  Json echo = to_json(config);
  echo["input"] = a.input;
  echo["mask"] = a.mask ? Json(*a.mask) : Json(nullptr);
  echo["mrf"] = a.mrf;

  EmResult result;
  Stopwatch fit_time;
  if (a.mrf) {
    if (a.grid.empty()) throw InputError("--mrf requires --grid HxWxF");
    GridShape grid = parse_grid(a.grid);
    grid.pixels_along_rows = !a.pixels_along_columns;
    grid.scheme = a.spatial_only ? Neighborhood::spatial4 : Neighborhood::spatial4_temporal2;
    grid.check(y.rows(), y.cols());
    MrfConfig mrf;
    mrf.tau = a.tau;
    echo["grid"] = a.grid;
    echo["tau"] = a.tau;
    echo["pixels_along_rows"] = grid.pixels_along_rows;
    echo["spatial_only"] = a.spatial_only;
    result = fit_pmoep_mrf(y, grid, config, mrf);
  } else {
    result = fit_pmoep(y, config);
  }
  const double fit_seconds = fit_time.seconds();

  const fs::path out(a.out);
  fs::create_directories(out);
  write_csv(out / "U.csv", result.factors.U);
  write_csv(out / "V.csv", result.factors.V);
  write_trace(out / "trace.csv", result);
  write_residual_density(out, y, result, 60);

  RunManifest m = make_manifest("fit", config.seed, echo);
  m.results = to_json(result);
  m.results["responsibilities"] = responsibility_summary(result);
  m.timings["fit"] = fit_seconds;
  m.timings["total"] = total.seconds();
  write_manifest(out / "manifest.json", m);

  std::cout << "K_final=" << result.k_final() << " objective=" << result.objective()
            << " iterations=" << result.iterations << (result.converged ? "" : " (not converged)") << '\n';
  return kExitOk;
}

// bench --------------------------------------------------------------------

struct BenchArgs {
  std::string regime = "all";
  int replicates = 10;
  std::string methods = "pmoep,svd";
  std::string out;
  EmFlags em;
  Index m = 40;
  Index n = 20;
  double missing = 0.2;
  std::size_t density_points = 201;
};

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  for (char c : text + ",") {
    if (c == ',') {
      if (token.empty()) throw InputError("malformed list: '" + text + "'");
      out.push_back(token);
      token.clear();
    } else if (c != ' ') {
      token += c;
    }
  }
  return out;
}

int cmd_bench(const BenchArgs& a) {
  Stopwatch total;
  std::vector<NoiseRegime> regimes;
  if (a.regime == "all") {
    regimes.assign(kAllRegimes.begin(), kAllRegimes.end());
  } else {
    for (const auto& name : split_names(a.regime)) {
      const auto r = parse_regime(name);
      if (!r) throw InputError("unknown regime '" + name + "'");
      regimes.push_back(*r);
    }
  }
  const auto methods = split_names(a.methods);
  for (const auto& method : methods) {
    if (method != "pmoep" && method != "pmog" && method != "svd") throw InputError("unknown method '" + method + "'");
  }
  if (a.replicates < 1) throw InputError("--replicates must be >= 1");

  const fs::path out(a.out);
  fs::create_directories(out);
  RunManifest manifest = make_manifest("bench", a.em.seed,
                                       {{"regime", a.regime},
                                        {"replicates", a.replicates},
                                        {"methods", methods},
                                        {"m", a.m},
                                        {"n", a.n},
                                        {"rank", a.em.rank},
                                        {"missing", a.missing}});

  for (NoiseRegime regime : regimes) {
    const std::string name(regime_name(regime));
    const RegimePreset preset = regime_preset(regime);
    const EmConfig pmoep = a.em.config(preset.p_candidates, preset.lambda);
    EmConfig pmog = pmoep;
    std::fill(pmog.p_candidates.begin(), pmog.p_candidates.end(), 2.0);

    std::vector<std::array<double, 6>> sums(methods.size(), std::array<double, 6>{});
    std::vector<double> rep, method_index, k_final, runtime;
    std::array<std::vector<double>, 6> cs;
    std::optional<EmResult> first_fit;
    for (int r = 0; r < a.replicates; ++r) {
      SyntheticSpec spec{a.m, a.n, a.em.rank, a.missing, regime, splitmix64(a.em.seed + static_cast<std::uint64_t>(r))};
      const SyntheticData data = generate_synthetic(spec);
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        Stopwatch sw;
        FactorPair factors;
        std::size_t k = 0;
        if (methods[mi] == "svd") {
          factors = svd_baseline(data.observed, a.em.rank);
        } else {
          EmConfig c = methods[mi] == "pmoep" ? pmoep : pmog;
          c.seed = splitmix64(spec.seed ^ 0x5eedULL);
          EmResult fit = fit_pmoep(data.observed, c);
          factors = fit.factors;
          k = fit.k_final();
          if (methods[mi] == "pmoep" && !first_fit) first_fit = std::move(fit);
        }
        EvalReport report = evaluate(factors, data);
        report.runtime_seconds = sw.seconds();
        report.k_final = k;
        rep.push_back(r);
        method_index.push_back(static_cast<double>(mi));
        k_final.push_back(static_cast<double>(k));
        runtime.push_back(report.runtime_seconds);
        for (int c = 0; c < 6; ++c) {
          cs[static_cast<std::size_t>(c)].push_back(report.C(c + 1));
          sums[mi][static_cast<std::size_t>(c)] += report.C(c + 1);
        }
      }
    }

    const fs::path dir = out / name;
    fs::create_directories(dir);
    {
      std::ofstream table(dir / "table.csv");
      table << "metric";
      for (const auto& method : methods) table << ',' << method;
      table << '\n';
      for (int c = 0; c < 6; ++c) {
        table << 'C' << (c + 1);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          table << ',' << sums[mi][static_cast<std::size_t>(c)] / a.replicates;
        }
        table << '\n';
      }
    }
    write_columns_csv(dir / "runs.csv",
                      {&rep, &method_index, &k_final, &runtime, &cs[0], &cs[1], &cs[2], &cs[3], &cs[4], &cs[5]});

    Json regime_json = {{"p", pmoep.p_candidates}, {"lambda", pmoep.penalty.lambda}};
    if (first_fit) {
      const NoiseModel truth = regime_noise(regime);
      const DensityCurve curve = density_curve(first_fit->model, truth, -3.0, 3.0, a.density_points);
      write_columns_csv(dir / "density.csv", {&curve.x, &curve.fitted, &curve.truth});
      regime_json["first_replicate_model"] = to_json(first_fit->model);
      regime_json["first_replicate_trace"] = first_fit->objective_trace;
    }
    Json means = Json::object();
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      std::array<double, 6> mean{};
      for (std::size_t c = 0; c < 6; ++c) mean[c] = sums[mi][c] / a.replicates;
      means[methods[mi]] = mean;
    }
    regime_json["mean_C"] = means;
    manifest.results[name] = regime_json;
    std::cout << name << ": wrote " << (dir / "table.csv").string() << '\n';
  }
  manifest.timings["total"] = total.seconds();
  write_manifest(out / "manifest.json", manifest);
  return kExitOk;
}

// select -------------------------------------------------------------------

struct SelectArgs {
  std::optional<std::string> input;
  std::optional<std::string> mask;
  std::optional<std::string> regime;
  std::string grid = "0.001,0.005,0.01,0.05,0.1,0.15,0.3";
  std::string out;
  EmFlags em;
};

int cmd_select(const SelectArgs& a) {
  Stopwatch total;
  const std::vector<double> grid = parse_real_list(a.grid);
  ObservedMatrix y;
  Json echo;
  if (a.input) {
    if (a.regime) throw InputError("--input and --regime are exclusive");
    y = load_observed(*a.input, a.mask ? std::optional<fs::path>(*a.mask) : std::nullopt);
    echo["input"] = *a.input;
  } else if (a.regime) {
    const auto r = parse_regime(*a.regime);
    if (!r) throw InputError("unknown regime '" + *a.regime + "'");
    SyntheticSpec spec;
    spec.regime = *r;
    spec.r = a.em.rank;
    spec.seed = a.em.seed;
    y = generate_synthetic(spec).observed;
    echo["regime"] = *a.regime;
  } else {
    throw InputError("one of --input or --regime is required");
  }
  const EmConfig base = a.em.config(kSelectionCandidates, grid.front());
  echo["base"] = to_json(base);
  echo["grid"] = grid;

  const SelectionReport report = select_lambda(y, base, grid);

  const fs::path out(a.out);
  fs::create_directories(out);
  {
    std::ofstream csv(out / "selection.csv");
    csv << "lambda,k_final,bic,log_likelihood,status\n";
    for (const auto& rec : report.records) {
      csv << rec.lambda << ',' << rec.k_final() << ',' << (rec.ok() ? rec.bic : std::nan("")) << ','
          << (rec.ok() ? rec.result->log_likelihood : std::nan("")) << ',' << (rec.ok() ? "ok" : "failed") << '\n';
    }
  }
  const auto& best = report.best();
  write_csv(out / "U.csv", best.result->factors.U);
  write_csv(out / "V.csv", best.result->factors.V);

  RunManifest m = make_manifest("select", base.seed, echo);
  Json rows = Json::array();
  for (const auto& rec : report.records) {
    rows.push_back({{"lambda", rec.lambda}, {"k_final", rec.k_final()}, {"bic", rec.ok() ? Json(rec.bic) : Json(nullptr)},
                    {"error", rec.error}});
  }
  m.results = {{"records", rows}, {"chosen_lambda", best.lambda}, {"chosen", to_json(*best.result)}};
  m.timings["total"] = total.seconds();
  write_manifest(out / "manifest.json", m);

  std::cout << "chosen lambda=" << best.lambda << " K_final=" << best.k_final() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank matrix factorization under mixture of exponential power noise"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(PMOEP_VERSION));
  std::string config_path;

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a data matrix");
  fit_cmd->add_option("--config", config_path, "JSON file supplying any flag");
  fit_cmd->add_option("--input", fit.input, "CSV matrix, nan marks missing entries");
  fit_cmd->add_option("--mask", fit.mask, "0/1 CSV of observed entries");
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit.em.add(fit_cmd);
  fit_cmd->add_flag("--mrf", fit.mrf, "Couple neighboring entries with a Markov random field");
  fit_cmd->add_option("--grid", fit.grid, "Video shape HxWxF for --mrf");
  fit_cmd->add_option("--tau", fit.tau, "MRF coupling strength")->capture_default_str();
  fit_cmd->add_flag("--pixels-along-columns", fit.pixels_along_columns, "Columns index pixels, rows index frames");
  fit_cmd->add_flag("--spatial-only", fit.spatial_only, "No coupling across frames");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run the synthetic benchmark");
  bench_cmd->add_option("--config", config_path, "JSON file supplying any flag");
  bench_cmd->add_option("--regime", bench.regime, "Regime name, comma list, or all")->capture_default_str();
  bench_cmd->add_option("--replicates", bench.replicates, "Random matrices per regime")->capture_default_str();
  bench_cmd->add_option("--methods", bench.methods, "Any of pmoep,pmog,svd")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "Output directory");
  bench_cmd->add_option("--m", bench.m, "Rows")->capture_default_str();
  bench_cmd->add_option("--n", bench.n, "Columns")->capture_default_str();
  bench_cmd->add_option("--missing", bench.missing, "Missing fraction")->capture_default_str();
  bench_cmd->add_option("--density-points", bench.density_points, "Grid size of density curves")->capture_default_str();
  bench.em.add(bench_cmd);

  SelectArgs select;
  CLI::App* select_cmd = app.add_subcommand("select", "Choose lambda by modified BIC");
  select_cmd->add_option("--config", config_path, "JSON file supplying any flag");
  select_cmd->add_option("--input", select.input, "CSV matrix, nan marks missing entries");
  select_cmd->add_option("--mask", select.mask, "0/1 CSV of observed entries");
  select_cmd->add_option("--regime", select.regime, "Synthetic regime instead of --input");
  select_cmd->add_option("--grid", select.grid, "Comma-separated lambda candidates")->capture_default_str();
  select_cmd->add_option("--out", select.out, "Output directory");
  select.em.add(select_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) apply_config(sub, config_path);
    if (*fit_cmd) {
      require(!fit.input.empty(), "--input");
      require(!fit.out.empty(), "--out");
      return cmd_fit(fit);
    }
    if (*bench_cmd) {
      require(!bench.out.empty(), "--out");
      return cmd_bench(bench);
    }
    if (*select_cmd) {
      require(!select.out.empty(), "--out");
      return cmd_select(select);
    }
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitShape;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
