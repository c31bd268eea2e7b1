#include "pmoep/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pmoep {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(std::string_view token, const fs::path& path, std::size_t line) {
  token = trim(token);
  if (token == "nan" || token == "NaN" || token == "NAN") return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
    throw InputError(path.string() + ":" + std::to_string(line) + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

std::ifstream open_input(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("input not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void put_number(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
    return;
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

MatrixXd read_csv(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      row.push_back(parse_number(rest.substr(0, comma), path, line_no));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path.string() + ": empty matrix");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

void write_csv(const fs::path& path, const MatrixXd& values) {
  std::ofstream out = open_output(path);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      put_number(out, values(i, j));
    }
    out << '\n';
  }
}

Mask read_mask_csv(const fs::path& path) {
  const MatrixXd m = read_csv(path);
  if (!((m.array() == 0.0) || (m.array() == 1.0)).all()) throw InputError(path.string() + ": mask must be 0/1");
  return m.array() == 1.0;
}

void write_columns_csv(const fs::path& path, const std::vector<const std::vector<double>*>& columns) {
  std::ofstream out = open_output(path);
  if (columns.empty()) return;
  const std::size_t n = columns.front()->size();
  for (const auto* c : columns) {
    if (c->size() != n) throw ShapeError("write_columns_csv: columns differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ',';
      put_number(out, (*columns[c])[i]);
    }
    out << '\n';
  }
}

ObservedMatrix load_observed(const fs::path& values, const std::optional<fs::path>& mask) {
  MatrixXd y = read_csv(values);
  if (!mask) return ObservedMatrix::from_nan(y);
  Mask w = read_mask_csv(*mask);
  if (w.rows() != y.rows() || w.cols() != y.cols()) throw ShapeError("mask shape does not match the input matrix");
  // Values under a zero mask are ignored, nan or not.
  y = w.select(y, 0.0);
  return ObservedMatrix(std::move(y), std::move(w));
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::string_view rest(text);
  while (true) {
    const auto comma = rest.find(',');
    const auto token = trim(rest.substr(0, comma));
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || !(value > 0.0) ||
        !std::isfinite(value)) {
      throw InputError("malformed list of positive reals: '" + text + "'");
    }
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

Json to_json(const MoEPModel& model) {
  Json j = Json::array();
  for (const auto& c : model.components) j.push_back({{"p", c.p}, {"eta", c.eta}, {"pi", c.pi}});
  return j;
}

MoEPModel model_from_json(const Json& j) {
  MoEPModel model;
  for (const auto& c : j) model.components.push_back({c.at("p").get<double>(), c.at("eta").get<double>(), c.at("pi").get<double>()});
  return model;
}

Json to_json(const EmConfig& c) {
  return {{"rank", c.rank},
          {"p", c.p_candidates},
          {"lambda", c.penalty.lambda},
          {"epsilon", c.penalty.epsilon},
          {"dof", c.penalty.dof},
          {"penalty_scale", c.penalty.scale == PenaltyScale::columns ? "columns" : "observed"},
          {"tol", c.tol},
          {"max_outer", c.max_outer},
          {"warmup_iterations", c.warmup_iterations},
          {"restarts", c.restarts},
          {"seed", c.seed},
          {"alm", {{"rho0", c.alm.rho0}, {"alpha", c.alm.alpha}, {"max_iterations", c.alm.max_iterations},
                   {"tolerance", c.alm.tolerance}, {"relative_rho", c.alm.relative_rho}}},
          {"l2", {{"max_iterations", c.l2.max_iterations}, {"tolerance", c.l2.tolerance}}},
          {"quadratic_fast_path", c.quadratic_fast_path}};
}

// Keys absent from `j` keep their defaults, so partial config files work.
EmConfig em_config_from_json(const Json& j) {
  EmConfig c;
  c.rank = j.value("rank", c.rank);
  c.p_candidates = j.value("p", c.p_candidates);
  c.penalty.lambda = j.value("lambda", c.penalty.lambda);
  c.penalty.epsilon = j.value("epsilon", c.penalty.epsilon);
  c.penalty.dof = j.value("dof", c.penalty.dof);
  if (j.contains("penalty_scale")) {
    const auto scale = j.at("penalty_scale").get<std::string>();
    if (scale == "observed") c.penalty.scale = PenaltyScale::observed;
    else if (scale == "columns") c.penalty.scale = PenaltyScale::columns;
    else throw InputError("penalty_scale must be observed or columns");
  }
  c.tol = j.value("tol", c.tol);
  c.max_outer = j.value("max_outer", c.max_outer);
  c.warmup_iterations = j.value("warmup_iterations", c.warmup_iterations);
  c.restarts = j.value("restarts", c.restarts);
  c.seed = j.value("seed", c.seed);
  if (j.contains("alm")) {
    const auto& alm = j.at("alm");
    c.alm.rho0 = alm.value("rho0", c.alm.rho0);
    c.alm.alpha = alm.value("alpha", c.alm.alpha);
    c.alm.max_iterations = alm.value("max_iterations", c.alm.max_iterations);
    c.alm.tolerance = alm.value("tolerance", c.alm.tolerance);
    c.alm.relative_rho = alm.value("relative_rho", c.alm.relative_rho);
  }
  if (j.contains("l2")) {
    c.l2.max_iterations = j.at("l2").value("max_iterations", c.l2.max_iterations);
    c.l2.tolerance = j.at("l2").value("tolerance", c.l2.tolerance);
  }
  c.quadratic_fast_path = j.value("quadratic_fast_path", c.quadratic_fast_path);
  return c;
}

Json to_json(const EmDiagnostics& d) {
  return {{"underflow_entries", d.underflow_entries},
          {"eta_clamped", d.eta_clamped},
          {"inner_not_converged", d.inner_not_converged},
          {"ridge_used", d.ridge_used},
          {"rejected_factor_updates", d.rejected_factor_updates},
          {"mrf_not_converged", d.mrf_not_converged},
          {"failed_restarts", d.failed_restarts}};
}

Json to_json(const EmResult& r) {
  return {{"model", to_json(r.model)},
          {"objective_trace", r.objective_trace},
          {"component_trace", r.component_trace},
          {"log_likelihood", r.log_likelihood},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"restart", r.restart},
          {"restart_seed", r.restart_seed},
          {"diagnostics", to_json(r.diagnostics)}};
}

Json to_json(const EvalReport& r) {
  return {{"C", r.c}, {"runtime_seconds", r.runtime_seconds}, {"k_final", r.k_final}, {"rank_deficient", r.rank_deficient}};
}

EvalReport eval_report_from_json(const Json& j) {
  EvalReport r;
  r.c = j.at("C").get<std::array<double, 6>>();
  r.runtime_seconds = j.at("runtime_seconds").get<double>();
  r.k_final = j.at("k_final").get<std::size_t>();
  r.rank_deficient = j.at("rank_deficient").get<bool>();
  return r;
}

Json RunManifest::to_json() const {
  return {{"command", command}, {"version", version}, {"seed", seed},
          {"config", config},   {"results", results}, {"timings", timings}};
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config");
  m.results = j.at("results");
  m.timings = j.at("timings").get<std::map<std::string, double>>();
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  std::ofstream out = open_output(path);
  out << manifest.to_json().dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in = open_input(path);
  try {
    return RunManifest::from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace pmoep
