#ifndef PMOEP_ALM_HPP
#define PMOEP_ALM_HPP

#include "pmoep/mixture.hpp"
#include "pmoep/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace pmoep {

template <typename Scalar>
struct ProxTerm {
  Scalar c;  // coefficient, >= 0
  Scalar p;  // exponent, > 0
};

/// 0.5 (t - s)^2 + (1/rho) sum_l c_l |s|^p_l
template <typename Scalar>
Scalar prox_objective(Scalar s, Scalar t, std::span<const ProxTerm<Scalar>> terms, Scalar rho) {
  using std::abs;
  using std::pow;
  Scalar penalty = 0;
  for (const auto& term : terms) penalty += term.c * pow(abs(s), term.p);
  return Scalar(0.5) * (t - s) * (t - s) + penalty / rho;
}

namespace detail {

// Derivative and curvature of the prox objective at s > 0 on the branch
// sign(s) = sign(t), written for the magnitude a = |t|.
template <typename Scalar>
struct ProxBranch {
  std::span<const ProxTerm<Scalar>> terms;
  Scalar a;
  Scalar inv_rho;

  // Slope and curvature at s > 0 together, sharing one log.
  void evaluate(Scalar s, Scalar& g, Scalar& h) const {
    using std::exp;
    using std::log;
    g = s - a;
    h = 1;
    const Scalar ls = log(s);
    for (const auto& term : terms) {
      const Scalar cp = inv_rho * term.c * term.p;
      if (term.p == 1) {
        g += cp;
      } else if (term.p == 2) {
        g += cp * s;
        h += cp;
      } else {
        const Scalar pw = exp((term.p - 1) * ls);  // s^(p-1)
        g += cp * pw;
        h += cp * (term.p - 1) * pw / s;
      }
    }
  }

  Scalar slope(Scalar s) const {
    using std::pow;
    Scalar g = s - a;
    for (const auto& term : terms) g += inv_rho * term.c * term.p * pow(s, term.p - 1);
    return g;
  }

  Scalar curvature(Scalar s) const {
    Scalar g;
    Scalar h;
    evaluate(s, g, h);
    return h;
  }

  // Root of the curvature. With any exponent below one the curvature is
  // negative near zero and changes sign at most once; returns 0 when it
  // stays non-positive on (0, a].
  Scalar inflection() const {
    using std::sqrt;
    if (curvature(a) <= 0) return 0;
    Scalar hi = a;
    Scalar lo = a / 2;
    while (curvature(lo) > 0) {
      hi = lo;
      lo /= 2;
      if (lo < std::numeric_limits<Scalar>::min()) return 0;
    }
    // Only used to bracket the root, so a loose location is enough.
    for (int it = 0; it < 200 && hi - lo > Scalar(1e-6) * hi; ++it) {
      const Scalar mid = sqrt(lo * hi) > lo && sqrt(lo * hi) < hi ? sqrt(lo * hi) : (lo + hi) / 2;
      if (curvature(mid) > 0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }
};

}  // namespace detail

/// argmin_s 0.5 (t - s)^2 + (1/rho) sum_l c_l |s|^p_l.
///
/// The minimizer shares the sign of t and lies in [0, |t|]. On that interval
/// the stationarity function g(s) is either increasing (all p_l >= 1) or
/// decreasing then increasing (some p_l < 1), so it has at most one upward
/// crossing. That crossing is found by safeguarded Newton started at |t|,
/// and s = 0 is always kept as a candidate.
template <typename Scalar>
Scalar prox_scalar(Scalar t, std::span<const ProxTerm<Scalar>> terms, Scalar rho) {
  using std::abs;
  using std::copysign;
  using std::max;
  if (!(rho > 0)) throw InputError("prox_scalar: rho must be positive");
  const Scalar a = abs(t);
  if (a == 0) return Scalar(0);

  Scalar linear = 0;     // p == 1 coefficients
  Scalar quadratic = 0;  // p == 2 coefficients
  bool general = false;
  bool concave = false;
  for (const auto& term : terms) {
    if (term.c < 0 || !(term.p > 0)) throw InputError("prox_scalar: invalid term");
    if (term.c == 0) continue;
    if (term.p == 1) {
      linear += term.c;
    } else if (term.p == 2) {
      quadratic += term.c;
    } else {
      general = true;
      concave = concave || term.p < 1;
    }
  }
  if (!general) {
    // Soft threshold followed by ridge shrinkage.
    return copysign(max(a - linear / rho, Scalar(0)) / (Scalar(1) + Scalar(2) * quadratic / rho), t);
  }

  if (concave) {
    // g(s) >= s - a + linear/rho + (c p / rho) s^(p-1) for each concave term;
    // when that bound stays non-negative there is no root and 0 wins.
    for (const auto& term : terms) {
      if (term.c == 0 || !(term.p < 1)) continue;
      using std::pow;
      const Scalar cp = term.c * term.p / rho;
      const Scalar s0 = pow(cp * (1 - term.p), 1 / (2 - term.p));
      if (s0 - a + linear / rho + cp * pow(s0, term.p - 1) >= 0) return Scalar(0);
    }
  }

  const detail::ProxBranch<Scalar> branch{terms, a, Scalar(1) / rho};
  constexpr Scalar kNaN = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar lo = kNaN;
  Scalar hi = a;
  if (!concave) {
    // Convex: the slope at 0 is finite.
    if (branch.slope(Scalar(0)) >= 0) return Scalar(0);
    lo = 0;
  }

  Scalar x = a;
  Scalar root = kNaN;
  Scalar g;
  Scalar h;
  branch.evaluate(x, g, h);
  for (int it = 0; it < 100; ++it) {
    if (g == 0) {
      root = x;
      break;
    }
    if (g > 0) {
      hi = std::min(hi, x);
    } else {
      lo = std::isnan(lo) ? x : max(lo, x);
    }
    if (!std::isnan(lo) && hi - lo <= Scalar(4) * std::numeric_limits<Scalar>::epsilon() * a) {
      root = g > 0 ? hi : lo;
      break;
    }
    Scalar next = h > 0 ? x - g / h : kNaN;
    Scalar g_next = kNaN;
    Scalar h_next = kNaN;
    if (std::isnan(lo)) {
      // Upper bracket only: stay right of the inflection point.
      if (next > 0 && next < hi) branch.evaluate(next, g_next, h_next);
      if (!(next > 0 && next < hi) || h_next <= 0) {
        const Scalar knee = branch.inflection();
        if (knee <= 0 || branch.slope(knee) >= 0) return Scalar(0);
        lo = knee;
        next = (lo + hi) / 2;
        g_next = kNaN;
      }
    } else if (!(next > lo && next < hi)) {
      next = (lo + hi) / 2;
    }
    if (abs(next - x) <= Scalar(2) * std::numeric_limits<Scalar>::epsilon() * a) {
      root = next;
      break;
    }
    x = next;
    if (std::isnan(g_next)) {
      branch.evaluate(x, g, h);
    } else {
      g = g_next;
      h = h_next;
    }
  }
  if (std::isnan(root)) root = std::isnan(lo) ? x : (lo + hi) / 2;

  if (concave) {
    const Scalar at_root = prox_objective(root, a, terms, rho);
    const Scalar at_zero = prox_objective(Scalar(0), a, terms, rho);
    if (!(at_root < at_zero)) return Scalar(0);
  }
  return copysign(root, t);
}

template <typename Scalar>
Scalar prox_scalar(Scalar t, const std::vector<ProxTerm<Scalar>>& terms, Scalar rho) {
  return prox_scalar(t, std::span<const ProxTerm<Scalar>>(terms), rho);
}

/// Best rank-r approximation of `target` in Frobenius norm from its truncated
/// SVD, split as U = U_r S^(1/2), V = V_r S^(1/2).
template <typename Derived>
FactorPair factor_step(const Eigen::MatrixBase<Derived>& target, Index rank) {
  using Scalar = typename Derived::Scalar;
  const Index m = target.rows();
  const Index n = target.cols();
  if (rank < 1 || rank > std::min(m, n)) throw InputError("factor_step: rank must lie in [1, min(m, n)]");
  if (!target.allFinite()) throw NumericalError("factor_step: target is not finite");
  const Matrix<Scalar> T = target;
  FactorPair out;

  // Eigen-decomposition of the smaller Gram matrix. Accurate while the kept
  // singular values are well separated from zero; otherwise use the SVD.
  const bool tall = m >= n;
  const Matrix<Scalar> gram = tall ? Matrix<Scalar>(T.transpose() * T) : Matrix<Scalar>(T * T.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(gram);
  if (eig.info() == Eigen::Success) {
    const Index d = gram.rows();
    const Vector<Scalar> top = eig.eigenvalues().tail(rank).reverse();
    const Scalar largest = eig.eigenvalues()(d - 1);
    if (largest > 0 && top(rank - 1) > Scalar(1e-8) * largest) {
      const Matrix<Scalar> basis = eig.eigenvectors().rightCols(rank).rowwise().reverse();
      const Vector<Scalar> sigma = top.cwiseSqrt();
      const Vector<Scalar> root = sigma.cwiseSqrt();
      if (tall) {
        out.U = (T * basis * root.cwiseInverse().asDiagonal()).template cast<double>();
        out.V = (basis * root.asDiagonal()).template cast<double>();
      } else {
        out.U = (basis * root.asDiagonal()).template cast<double>();
        out.V = (T.transpose() * basis * root.cwiseInverse().asDiagonal()).template cast<double>();
      }
      return out;
    }
  }
  Eigen::JacobiSVD<Matrix<Scalar>> svd(T, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector<Scalar> root = svd.singularValues().head(rank).cwiseSqrt();
  out.U = (svd.matrixU().leftCols(rank) * root.asDiagonal()).template cast<double>();
  out.V = (svd.matrixV().leftCols(rank) * root.asDiagonal()).template cast<double>();
  return out;
}

/// Per-entry prox coefficients c_ek = eta_k gamma_ek over the observed set.
struct ProxWeights {
  MatrixXd coeff;      // |Omega| x K
  VectorXd exponents;  // p_k

  static ProxWeights from(const Responsibilities& resp, const MoEPModel& model);

  Index components() const { return coeff.cols(); }

  /// W_(k): (c_ek)^(1/p_k) on observed entries, 0 elsewhere.
  MatrixXd weight_matrix(Index k, const ObservedMatrix& y) const;

  bool all_quadratic() const { return (exponents.array() == 2.0).all(); }
};

/// sum_k || W_(k) .* (Y - fitted) ||_{p_k}^{p_k}
double weighted_objective(const ObservedMatrix& y, const ProxWeights& weights, const MatrixXd& fitted);

struct AlmOptions {
  double rho0 = 1e-2;
  double alpha = 1.05;
  int max_iterations = 200;
  double tolerance = 1e-7;  // on ||L - U V^T||_F / ||Y||_F
  // Multiply rho0 by the mean total weight sum_k c_k over the observed set.
  bool relative_rho = false;
};

struct AlmState {
  MatrixXd L;
  MatrixXd Lambda;
  double rho = 1e-2;
  double alpha = 1.05;
  int iteration = 0;
};

/// Minimizer of the augmented Lagrangian over L for fixed factors. Observed
/// entries go through prox_scalar; missing ones take the unconstrained
/// quadratic minimum U V^T - Lambda / rho.
MatrixXd l_step(const ObservedMatrix& y, const FactorPair& factors, const AlmState& state, const ProxWeights& weights);

struct AlmResult {
  FactorPair factors;  // best-feasibility iterate
  FactorPair last;     // factors of the final iterate, consistent with the state
  int iterations = 0;
  bool converged = false;
  double feasibility = 0.0;               // relative gap of the returned iterate
  std::vector<double> feasibility_trace;  // ||L - U V^T||_F per iteration, absolute
};

/// State at the start of a run: L = U V^T, Lambda = 0, rho = rho0 (scaled by
/// the mean weight when options.relative_rho is set).
AlmState alm_start(const FactorPair& init, const ProxWeights& weights, const AlmOptions& options);

/// Continues the alternation from `state` for up to options.max_iterations
/// iterations, stopping early once the relative gap reaches options.tolerance.
AlmResult alm_iterate(const ObservedMatrix& y, const ProxWeights& weights, Index rank, AlmState& state,
                      const AlmOptions& options);

/// Augmented Lagrangian alternation for the weighted mixed p-norm factorization.
AlmResult solve_weighted_lrmf(const ObservedMatrix& y, const ProxWeights& weights, Index rank, const FactorPair& init,
                              const AlmOptions& options = {});

struct WeightedL2Options {
  int max_iterations = 500;
  double tolerance = 1e-13;  // relative objective decrease
};

struct WeightedL2Result {
  FactorPair factors;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool ridge_used = false;
};

/// || W .* (Y - U V^T) ||_F^2 with W forced to zero off the observed set.
double weighted_l2_objective(const ObservedMatrix& y, const MatrixXd& weights, const FactorPair& factors);

/// Alternating row/column weighted least squares for || W .* (Y - U V^T) ||_F^2.
WeightedL2Result solve_weighted_l2(const ObservedMatrix& y, const MatrixXd& weights, Index rank,
                                   const FactorPair& init, const WeightedL2Options& options = {});

/// W for the quadratic special case: sqrt(sum_k c_ek) on observed entries.
MatrixXd quadratic_weight_matrix(const ObservedMatrix& y, const ProxWeights& weights);

}  // namespace pmoep

#endif  // PMOEP_ALM_HPP
