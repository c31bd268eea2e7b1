#include "pmoep/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace pmoep {

void GridShape::check(Index m, Index n) const {
  if (height < 1 || width < 1 || frames < 1) throw ShapeError("grid dimensions must be positive");
  const Index pixel_dim = pixels_along_rows ? m : n;
  const Index frame_dim = pixels_along_rows ? n : m;
  if (pixel_dim != pixels() || frame_dim != frames) {
    std::ostringstream msg;
    msg << "grid " << height << "x" << width << "x" << frames << " does not match a " << m << "x" << n << " matrix";
    throw ShapeError(msg.str());
  }
}

GridShape parse_grid(const std::string& text) {
  GridShape grid;
  Index* fields[] = {&grid.height, &grid.width, &grid.frames};
  std::size_t start = 0;
  for (int f = 0; f < 3; ++f) {
    const std::size_t end = f < 2 ? text.find('x', start) : text.size();
    if (end == std::string::npos || end == start) throw InputError("grid must look like HxWxF: " + text);
    const std::string part = text.substr(start, end - start);
    std::size_t used = 0;
    long long value = 0;
    try {
      value = std::stoll(part, &used);
    } catch (const std::exception&) {
      throw InputError("grid must look like HxWxF: " + text);
    }
    if (used != part.size() || value < 1) throw InputError("grid must look like HxWxF: " + text);
    *fields[f] = static_cast<Index>(value);
    start = end + 1;
  }
  return grid;
}

std::size_t NeighborGraph::pair_count() const {
  std::size_t total = 0;
  for (const auto& list : adjacency) total += list.size();
  return total / 2;
}

NeighborGraph NeighborGraph::build(const ObservedMatrix& y, const GridShape& grid) {
  grid.check(y.rows(), y.cols());
  const Index m = y.rows();
  const auto& omega = y.omega();
  std::vector<Index> position(static_cast<std::size_t>(y.rows() * y.cols()), -1);
  for (std::size_t e = 0; e < omega.size(); ++e) position[static_cast<std::size_t>(omega[e])] = static_cast<Index>(e);

  const auto linear = [&](Index pixel, Index frame) {
    return grid.pixels_along_rows ? pixel + m * frame : frame + m * pixel;
  };

  NeighborGraph g;
  g.adjacency.resize(omega.size());
  for (std::size_t e = 0; e < omega.size(); ++e) {
    const Index idx = omega[e];
    const Index row = idx % m;
    const Index col = idx / m;
    const Index pixel = grid.pixels_along_rows ? row : col;
    const Index frame = grid.pixels_along_rows ? col : row;
    const Index py = pixel % grid.height;
    const Index px = pixel / grid.height;
    auto& list = g.adjacency[e];
    const auto add = [&](Index qy, Index qx, Index qf) {
      if (qy < 0 || qy >= grid.height || qx < 0 || qx >= grid.width || qf < 0 || qf >= grid.frames) return;
      const Index q = position[static_cast<std::size_t>(linear(qy + grid.height * qx, qf))];
      if (q >= 0) list.push_back(q);
    };
    add(py - 1, px, frame);
    add(py + 1, px, frame);
    add(py, px - 1, frame);
    add(py, px + 1, frame);
    if (grid.scheme == Neighborhood::spatial4_temporal2) {
      add(py, px, frame - 1);
      add(py, px, frame + 1);
    }
    std::sort(list.begin(), list.end());
  }

  // Greedy coloring in omega order.
  std::vector<int> color(omega.size(), -1);
  std::vector<char> used;
  for (std::size_t e = 0; e < omega.size(); ++e) {
    used.assign(g.adjacency[e].size() + 1, 0);
    for (Index q : g.adjacency[e]) {
      const int c = color[static_cast<std::size_t>(q)];
      if (c >= 0 && static_cast<std::size_t>(c) < used.size()) used[static_cast<std::size_t>(c)] = 1;
    }
    int c = 0;
    while (used[static_cast<std::size_t>(c)]) ++c;
    color[e] = c;
    if (static_cast<std::size_t>(c) >= g.color_classes.size()) g.color_classes.resize(static_cast<std::size_t>(c) + 1);
    g.color_classes[static_cast<std::size_t>(c)].push_back(static_cast<Index>(e));
  }
  return g;
}

void MrfConfig::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw InputError("tau must be finite and >= 0");
  if (!(damping > 0.0 && damping <= 1.0)) throw InputError("damping must lie in (0, 1]");
  if (max_sweeps < 1) throw InputError("max_sweeps must be >= 1");
  if (!(tolerance > 0.0)) throw InputError("MRF tolerance must be positive");
}

namespace {

void check_consistent(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model, const NeighborGraph& graph,
                      const Responsibilities& resp) {
  if (residuals.size() != graph.entries() || resp.entries() != graph.entries() ||
      resp.components() != static_cast<Index>(model.size())) {
    throw ShapeError("MRF inputs disagree on the observed set or component count");
  }
}

}  // namespace

Responsibilities variational_e_step(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                                    const NeighborGraph& graph, const MrfConfig& mrf,
                                    const Responsibilities& gamma_init, MrfDiagnostics* diagnostics) {
  mrf.validate();
  check_consistent(residuals, model, graph, gamma_init);
  if (diagnostics) *diagnostics = {};
  if (mrf.tau == 0.0) return e_step(residuals, model);

  const MatrixXd logw = weighted_log_densities(residuals, model);
  const Index K = logw.cols();
  Responsibilities out = gamma_init;
  MatrixXd& gamma = out.gamma;
  VectorXd a(K);
  for (int sweep = 1; sweep <= mrf.max_sweeps; ++sweep) {
    double change = 0.0;
    for (const auto& cls : graph.color_classes) {
      for (Index i : cls) {
        a = logw.row(i).transpose();
        for (Index q : graph.adjacency[static_cast<std::size_t>(i)]) a += mrf.tau * gamma.row(q).transpose();
        const double top = a.maxCoeff();
        if (std::isfinite(top)) {
          a = (a.array() - top).exp();
          a /= a.sum();
        } else {
          a.setConstant(1.0 / static_cast<double>(K));
        }
        // Damping only matters for coupled entries; isolated ones jump to their fixed point.
        const bool isolated = graph.adjacency[static_cast<std::size_t>(i)].empty();
        const VectorXd next = isolated ? a : VectorXd((1.0 - mrf.damping) * gamma.row(i).transpose() + mrf.damping * a);
        change = std::max(change, (next - gamma.row(i).transpose()).cwiseAbs().maxCoeff());
        gamma.row(i) = next.transpose();
      }
    }
    if (diagnostics) diagnostics->sweeps = sweep;
    if (change < mrf.tolerance) return out;
  }
  if (diagnostics) diagnostics->converged = false;
  return out;
}

double lower_bound(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model, const NeighborGraph& graph,
                   const MrfConfig& mrf, const Responsibilities& resp) {
  check_consistent(residuals, model, graph, resp);
  const MatrixXd logw = weighted_log_densities(residuals, model);
  const MatrixXd& gamma = resp.gamma;
  double data = 0.0;
  double entropy = 0.0;
  for (Index k = 0; k < gamma.cols(); ++k) {
    for (Index i = 0; i < gamma.rows(); ++i) {
      const double g = gamma(i, k);
      if (g > 0.0) {
        data += g * logw(i, k);
        entropy -= g * std::log(g);
      }
    }
  }
  double coupling = 0.0;
  if (mrf.tau != 0.0) {
    for (Index i = 0; i < graph.entries(); ++i) {
      for (Index q : graph.adjacency[static_cast<std::size_t>(i)]) {
        if (q > i) coupling += gamma.row(i).dot(gamma.row(q));
      }
    }
  }
  return data + mrf.tau * coupling + entropy;
}

EmResult fit_pmoep_mrf(const ObservedMatrix& y, const GridShape& grid, const EmConfig& config, const MrfConfig& mrf) {
  mrf.validate();
  grid.check(y.rows(), y.cols());
  if (mrf.tau == 0.0) return fit_pmoep(y, config);

  const auto graph = std::make_shared<const NeighborGraph>(NeighborGraph::build(y, grid));
  detail::EStepPolicy policy;
  policy.e_step = [graph, mrf](const VectorXd& residuals, const MoEPModel& model, const Responsibilities* previous,
                               EmDiagnostics& diagnostics) {
    MixtureDiagnostics md;
    const Responsibilities init = previous ? *previous : e_step(residuals, model, &md);
    diagnostics.underflow_entries += md.underflow_entries;
    MrfDiagnostics mrf_diag;
    Responsibilities resp = variational_e_step(residuals, model, *graph, mrf, init, &mrf_diag);
    if (!mrf_diag.converged) ++diagnostics.mrf_not_converged;
    return resp;
  };
  const PenaltyConfig penalty = config.penalty;
  const Index cols = y.cols();
  const Index omega = y.observed_count();
  policy.objective = [graph, mrf, penalty, cols, omega](const VectorXd& residuals, const MoEPModel& model,
                                                         const Responsibilities& resp) {
    return lower_bound(residuals, model, *graph, mrf, resp) - mixing_penalty(model, penalty, cols, omega);
  };
  return detail::run_restarts(y, config, policy);
}

}  // namespace pmoep
