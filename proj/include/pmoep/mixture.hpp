#ifndef PMOEP_MIXTURE_HPP
#define PMOEP_MIXTURE_HPP

#include "pmoep/ep.hpp"
#include "pmoep/types.hpp"

#include <cstddef>
#include <vector>

namespace pmoep {

inline constexpr double kEtaMin = 1e-8;
inline constexpr double kEtaMax = 1e8;

struct EPComponent {
  double p;
  double eta;
  double pi;

  EPParams<double> params() const { return {p, eta}; }
};

/// Mixture of zero-mean exponential power components.
struct MoEPModel {
  std::vector<EPComponent> components;

  std::size_t size() const { return components.size(); }

  /// Throws InputError unless every component is in domain and the weights
  /// form a distribution.
  void validate() const;

  double log_pdf(double x) const;
};

/// Which count multiplies lambda in the mixing-weight penalty.
enum class PenaltyScale {
  columns,   // n, the column count of Y
  observed,  // |Omega|, the number of observed entries
};

struct PenaltyConfig {
  double lambda = 0.0;
  double epsilon = 1e-6;
  double dof = 2.0;  // free parameters per component (pi_k and eta_k)
  PenaltyScale scale = PenaltyScale::observed;

  void validate() const;

  /// The multiplier c in c * sum_k D_k log((eps + pi_k) / eps).
  double coefficient(Index cols, Index observed) const {
    return lambda * static_cast<double>(scale == PenaltyScale::columns ? cols : observed);
  }
};

/// Posterior (or variational) component weights, one row per observed entry
/// in omega order, one column per component.
struct Responsibilities {
  MatrixXd gamma;

  Index entries() const { return gamma.rows(); }
  Index components() const { return gamma.cols(); }
  VectorXd mass() const { return gamma.colwise().sum().transpose(); }
};

struct MixtureDiagnostics {
  std::size_t underflow_entries = 0;
  std::size_t eta_clamped = 0;
};

/// log pi_k + log f_k(e) for every entry and component.
MatrixXd weighted_log_densities(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model);

/// gamma_k proportional to pi_k f_k(e), normalized with log-sum-exp. Entries
/// where every component underflows get a uniform row.
Responsibilities e_step(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                        MixtureDiagnostics* diagnostics = nullptr);

/// In-place row normalization in log space; returns the per-row log-sum-exp.
VectorXd normalize_log_rows(MatrixXd& log_weights, MixtureDiagnostics* diagnostics = nullptr);

struct PiUpdate {
  VectorXd pi;                     // renormalized weights of the surviving components
  std::vector<Index> survivors;    // indices into the incoming component list
  VectorXd raw;                    // unnormalized update before truncation and pruning
};

/// Penalized mixing-weight update
///
///   pi_k = max{0, (N_k / |Omega| - lambda D_k) / (1 - lambda D_hat)},  D_hat = sum_k D_k.
///
/// Components that hit zero are dropped; survivors are renormalized. Never
/// drops the last component. Throws InputError when lambda D_hat >= 1 unless
/// `allow_large_penalty`, in which case the weights are max{0, N_k/|Omega| -
/// lambda D_k} renormalized over the survivors. That is the same result
/// whenever the denominator is positive.
PiUpdate update_pi(const Responsibilities& resp, const PenaltyConfig& penalty, Index omega_size,
                   bool allow_large_penalty = false);

/// eta_k = N_k / (p_k sum gamma_k |e|^p_k), clamped to [kEtaMin, kEtaMax].
VectorXd update_eta(const Responsibilities& resp, const Eigen::Ref<const VectorXd>& residuals,
                    const MoEPModel& model, MixtureDiagnostics* diagnostics = nullptr);

/// Sum over observed entries of log sum_k pi_k f_k(e).
double mixture_log_likelihood(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model);

/// c * sum_k D_k log((eps + pi_k) / eps) with c = penalty.coefficient(cols, omega_size).
double mixing_penalty(const MoEPModel& model, const PenaltyConfig& penalty, Index cols, Index omega_size);

/// mixture_log_likelihood - mixing_penalty.
double penalized_log_likelihood(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                                const PenaltyConfig& penalty, Index cols, Index omega_size);

/// Drop columns of `resp` not listed in `survivors`.
Responsibilities restrict_components(const Responsibilities& resp, const std::vector<Index>& survivors);

}  // namespace pmoep

#endif  // PMOEP_MIXTURE_HPP
