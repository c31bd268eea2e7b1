#include "pmoep/alm.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <cmath>
#include <limits>

namespace pmoep {

ProxWeights ProxWeights::from(const Responsibilities& resp, const MoEPModel& model) {
  const auto K = static_cast<Index>(model.size());
  if (resp.components() != K) throw ShapeError("ProxWeights: responsibilities do not match model");
  ProxWeights w;
  w.coeff.resize(resp.entries(), K);
  w.exponents.resize(K);
  for (Index k = 0; k < K; ++k) {
    const auto& c = model.components[static_cast<std::size_t>(k)];
    w.coeff.col(k) = c.eta * resp.gamma.col(k);
    w.exponents(k) = c.p;
  }
  return w;
}

MatrixXd ProxWeights::weight_matrix(Index k, const ObservedMatrix& y) const {
  MatrixXd w = MatrixXd::Zero(y.rows(), y.cols());
  const auto& omega = y.omega();
  for (std::size_t e = 0; e < omega.size(); ++e) {
    w(omega[e]) = std::pow(coeff(static_cast<Index>(e), k), 1.0 / exponents(k));
  }
  return w;
}

double weighted_objective(const ObservedMatrix& y, const ProxWeights& weights, const MatrixXd& fitted) {
  const VectorXd e = y.residuals(fitted);
  if (e.size() != weights.coeff.rows()) throw ShapeError("weighted_objective: weights do not match observed set");
  double total = 0.0;
  for (Index k = 0; k < weights.components(); ++k) {
    const double p = weights.exponents(k);
    if (p == 2.0) {
      total += (weights.coeff.col(k).array() * e.array().square()).sum();
    } else if (p == 1.0) {
      total += (weights.coeff.col(k).array() * e.array().abs()).sum();
    } else {
      total += (weights.coeff.col(k).array() * e.array().abs().pow(p)).sum();
    }
  }
  return total;
}

MatrixXd l_step(const ObservedMatrix& y, const FactorPair& factors, const AlmState& state, const ProxWeights& weights) {
  const double inv_rho = 1.0 / state.rho;
  MatrixXd L = factors.product() - inv_rho * state.Lambda;
  const auto& omega = y.omega();
  const Index K = weights.components();
  std::vector<ProxTerm<double>> terms(static_cast<std::size_t>(K));
  for (std::size_t e = 0; e < omega.size(); ++e) {
    const Index idx = omega[e];
    const double yv = y.values()(idx);
    // t = y - u v^T + Lambda / rho, so y - t is exactly the unconstrained L.
    const double t = yv - L(idx);
    for (Index k = 0; k < K; ++k) {
      terms[static_cast<std::size_t>(k)] = {weights.coeff(static_cast<Index>(e), k), weights.exponents(k)};
    }
    L(idx) = yv - prox_scalar(t, std::span<const ProxTerm<double>>(terms), state.rho);
  }
  return L;
}

AlmState alm_start(const FactorPair& init, const ProxWeights& weights, const AlmOptions& options) {
  if (!(options.rho0 > 0.0) || !(options.alpha > 1.0) || options.max_iterations < 1) {
    throw InputError("ALM: invalid options");
  }
  AlmState state;
  state.L = init.product();
  state.Lambda = MatrixXd::Zero(state.L.rows(), state.L.cols());
  state.rho = options.rho0;
  state.alpha = options.alpha;
  if (options.relative_rho && weights.coeff.rows() > 0) {
    const double mean_weight = weights.coeff.sum() / static_cast<double>(weights.coeff.rows());
    if (mean_weight > 0.0) state.rho *= mean_weight;
  }
  return state;
}

AlmResult alm_iterate(const ObservedMatrix& y, const ProxWeights& weights, Index rank, AlmState& state,
                      const AlmOptions& options) {
  if (weights.coeff.rows() != y.observed_count()) throw ShapeError("ALM: weights do not match data");
  if (state.L.rows() != y.rows() || state.L.cols() != y.cols() || state.Lambda.rows() != y.rows() ||
      state.Lambda.cols() != y.cols()) {
    throw ShapeError("ALM: state has the wrong shape");
  }
  if (options.max_iterations < 1) throw InputError("ALM: invalid options");
  double scale = y.values().norm();
  if (!(scale > 0.0)) scale = 1.0;

  AlmResult out;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.max_iterations; ++s) {
    FactorPair factors = factor_step(state.L + state.Lambda / state.rho, rank);
    state.L = l_step(y, factors, state, weights);
    const MatrixXd gap = state.L - factors.product();
    state.Lambda += state.rho * gap;
    state.rho *= state.alpha;
    ++state.iteration;

    const double abs_gap = gap.norm();
    if (!std::isfinite(abs_gap) || !state.Lambda.allFinite()) throw NumericalError("ALM: iterate diverged");
    out.feasibility_trace.push_back(abs_gap);
    const double rel_gap = abs_gap / scale;
    out.iterations = s + 1;
    if (rel_gap <= best_gap) {
      best_gap = rel_gap;
      out.factors = factors;
    }
    out.last = std::move(factors);
    if (rel_gap <= options.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.feasibility = best_gap;
  return out;
}

AlmResult solve_weighted_lrmf(const ObservedMatrix& y, const ProxWeights& weights, Index rank, const FactorPair& init,
                              const AlmOptions& options) {
  if (init.U.rows() != y.rows() || init.V.rows() != y.cols() || init.rank() != rank) {
    throw ShapeError("solve_weighted_lrmf: initial factors have the wrong shape");
  }
  AlmState state = alm_start(init, weights, options);
  return alm_iterate(y, weights, rank, state, options);
}

double weighted_l2_objective(const ObservedMatrix& y, const MatrixXd& weights, const FactorPair& factors) {
  const MatrixXd w = weights.array() * y.mask().cast<double>();
  return (w.array() * (y.values() - factors.product()).array()).square().sum();
}

namespace {

// Solves (A + ridge) x = b, reporting whether the ridge was needed.
VectorXd solve_normal_equations(const MatrixXd& A, const VectorXd& b, bool& ridge_used) {
  Eigen::LLT<MatrixXd> llt(A);
  const double diag_max = A.diagonal().cwiseAbs().maxCoeff();
  const double diag_min = A.diagonal().minCoeff();
  if (llt.info() == Eigen::Success && diag_min > 1e-12 * std::max(diag_max, 1.0)) {
    VectorXd x = llt.solve(b);
    if (x.allFinite()) return x;
  }
  ridge_used = true;
  MatrixXd R = A;
  R.diagonal().array() += 1e-10;
  return R.ldlt().solve(b);
}

}  // namespace

WeightedL2Result solve_weighted_l2(const ObservedMatrix& y, const MatrixXd& weights, Index rank, const FactorPair& init,
                                   const WeightedL2Options& options) {
  if (weights.rows() != y.rows() || weights.cols() != y.cols()) throw ShapeError("solve_weighted_l2: weight shape");
  if (init.U.rows() != y.rows() || init.V.rows() != y.cols() || init.rank() != rank) {
    throw ShapeError("solve_weighted_l2: initial factors have the wrong shape");
  }
  const MatrixXd w2 = (weights.array().square() * y.mask().cast<double>()).matrix();
  const MatrixXd& Y = y.values();
  WeightedL2Result out;
  out.factors = init;
  auto& U = out.factors.U;
  auto& V = out.factors.V;
  out.objective_trace.push_back(weighted_l2_objective(y, weights, out.factors));
  for (int it = 0; it < options.max_iterations; ++it) {
    for (Index i = 0; i < U.rows(); ++i) {
      const auto wi = w2.row(i).transpose();
      const MatrixXd A = V.transpose() * wi.asDiagonal() * V;
      const VectorXd b = V.transpose() * (wi.array() * Y.row(i).transpose().array()).matrix();
      U.row(i) = solve_normal_equations(A, b, out.ridge_used).transpose();
    }
    for (Index j = 0; j < V.rows(); ++j) {
      const auto wj = w2.col(j);
      const MatrixXd A = U.transpose() * wj.asDiagonal() * U;
      const VectorXd b = U.transpose() * (wj.array() * Y.col(j).array()).matrix();
      V.row(j) = solve_normal_equations(A, b, out.ridge_used).transpose();
    }
    out.iterations = it + 1;
    const double obj = weighted_l2_objective(y, weights, out.factors);
    const double prev = out.objective_trace.back();
    out.objective_trace.push_back(obj);
    if (prev - obj <= options.tolerance * std::max(prev, 1e-300)) break;
  }
  return out;
}

MatrixXd quadratic_weight_matrix(const ObservedMatrix& y, const ProxWeights& weights) {
  MatrixXd w = MatrixXd::Zero(y.rows(), y.cols());
  const auto& omega = y.omega();
  for (std::size_t e = 0; e < omega.size(); ++e) w(omega[e]) = std::sqrt(weights.coeff.row(static_cast<Index>(e)).sum());
  return w;
}

}  // namespace pmoep
