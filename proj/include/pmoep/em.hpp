#ifndef PMOEP_EM_HPP
#define PMOEP_EM_HPP

#include "pmoep/alm.hpp"
#include "pmoep/mixture.hpp"
#include "pmoep/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace pmoep {

struct EmConfig {
  Index rank = 4;
  std::vector<double> p_candidates{0.5, 1.0, 1.5, 2.0};  // one component per entry
  PenaltyConfig penalty;
  double tol = 1e-6;   // relative change of the monitored objective
  int max_outer = 100;
  // Unpenalized, unrecorded EM iterations with the independent-entry E-step,
  // run from the random start before the penalized run begins.
  int warmup_iterations = 10;
  int restarts = 5;
  std::uint64_t seed = 0;
  // Inner solves start with rho at the mean weight and grow it faster than
  // the standalone default. Each outer iteration solves from scratch.
  AlmOptions alm{1.0, 1.1, 10, 1e-7, true};
  // A few sweeps per outer iteration rather than a full solve.
  WeightedL2Options l2{3, 1e-13};
  // Use the weighted least-squares solver whenever every surviving p_k is 2.
  bool quadratic_fast_path = true;

  std::size_t k_start() const { return p_candidates.size(); }
  void validate() const;
};

struct EmDiagnostics {
  std::size_t underflow_entries = 0;
  std::size_t eta_clamped = 0;
  std::size_t inner_not_converged = 0;
  std::size_t ridge_used = 0;
  std::size_t rejected_factor_updates = 0;  // inner solves that would have lowered the objective
  std::size_t mrf_not_converged = 0;
  std::size_t failed_restarts = 0;
};

struct EmResult {
  FactorPair factors;
  MoEPModel model;
  Responsibilities resp;
  std::vector<double> objective_trace;    // one value per outer iteration
  std::vector<std::size_t> component_trace;
  double log_likelihood = 0.0;            // unpenalized mixture log-likelihood at the returned parameters
  bool converged = false;
  int iterations = 0;
  int restart = 0;
  std::uint64_t restart_seed = 0;
  EmDiagnostics diagnostics;

  std::size_t k_final() const { return model.size(); }
  double objective() const { return objective_trace.back(); }
};

/// Seed of restart `index` derived from the master seed.
std::uint64_t restart_seed(std::uint64_t master, int index);

/// i.i.d. N(0,1) entries scaled by (||Y||_F / sqrt(m n r))^(1/2).
FactorPair random_factors(const ObservedMatrix& y, Index rank, std::uint64_t seed);

/// Uniform weights and unit precisions; repeated exponents get precisions
/// spread by powers of 4 so that identical components can separate.
MoEPModel initial_model(std::span<const double> p_candidates);

/// Penalized EM for low-rank factorization under mixture-of-EP noise. Runs
/// `restarts` random initializations and keeps the highest final objective.
EmResult fit_pmoep(const ObservedMatrix& y, const EmConfig& config);

/// A single EM run from the given factors.
EmResult fit_pmoep_from(const ObservedMatrix& y, const EmConfig& config, const FactorPair& init);

struct MonotoneReport {
  bool monotone = true;
  std::optional<std::size_t> first_violation;  // index t with trace[t] < trace[t-1] - slack
};

/// Non-decreasing check with per-step slack `relative_slack * (1 + |trace[t-1]|)`.
MonotoneReport objective_monotone_check(std::span<const double> trace, double relative_slack = 1e-8);

namespace detail {

// E-step and monitored objective of an EM variant. `previous` is the last
// responsibilities restricted and renormalized to the surviving components,
// or null on the first iteration.
struct EStepPolicy {
  std::function<Responsibilities(const VectorXd& residuals, const MoEPModel& model, const Responsibilities* previous,
                                 EmDiagnostics& diagnostics)>
      e_step;
  std::function<double(const VectorXd& residuals, const MoEPModel& model, const Responsibilities& resp)> objective;
};

EStepPolicy mixture_policy(const ObservedMatrix& y, const PenaltyConfig& penalty);

EmResult run_em(const ObservedMatrix& y, const EmConfig& config, const FactorPair& init, const EStepPolicy& policy);

EmResult run_restarts(const ObservedMatrix& y, const EmConfig& config, const EStepPolicy& policy);

}  // namespace detail

}  // namespace pmoep

#endif  // PMOEP_EM_HPP
