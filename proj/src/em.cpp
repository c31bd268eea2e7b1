#include "pmoep/em.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

namespace pmoep {

void EmConfig::validate() const {
  if (rank < 1) throw InputError("rank must be >= 1");
  if (p_candidates.empty()) throw InputError("at least one shape candidate is required");
  for (double p : p_candidates) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InputError("shape candidates must be positive and finite");
  }
  penalty.validate();
  if (!(tol > 0.0)) throw InputError("tolerance must be positive");
  if (max_outer < 0) throw InputError("max_outer must be >= 0");
  if (warmup_iterations < 0) throw InputError("warmup_iterations must be >= 0");
  if (restarts < 1) throw InputError("restarts must be >= 1");
}

std::uint64_t restart_seed(std::uint64_t master, int index) {
  return splitmix64(splitmix64(master) + static_cast<std::uint64_t>(index));
}

FactorPair random_factors(const ObservedMatrix& y, Index rank, std::uint64_t seed) {
  const double m = static_cast<double>(y.rows());
  const double n = static_cast<double>(y.cols());
  double norm = y.values().norm();
  if (!(norm > 0.0)) norm = 1.0;
  const double scale = std::sqrt(norm / std::sqrt(m * n * static_cast<double>(rank)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorPair f;
  f.U = MatrixXd::NullaryExpr(y.rows(), rank, [&]() { return scale * normal(rng); });
  f.V = MatrixXd::NullaryExpr(y.cols(), rank, [&]() { return scale * normal(rng); });
  return f;
}

MoEPModel initial_model(std::span<const double> p_candidates) {
  MoEPModel model;
  std::map<double, int> seen;
  const double pi = 1.0 / static_cast<double>(p_candidates.size());
  for (double p : p_candidates) {
    const int repeat = seen[p]++;
    model.components.push_back({p, std::pow(4.0, -repeat), pi});
  }
  return model;
}

MonotoneReport objective_monotone_check(std::span<const double> trace, double relative_slack) {
  MonotoneReport report;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const double slack = relative_slack * (1.0 + std::abs(trace[t - 1]));
    if (!(trace[t] >= trace[t - 1] - slack)) {
      report.monotone = false;
      report.first_violation = t;
      return report;
    }
  }
  return report;
}

namespace detail {

EStepPolicy mixture_policy(const ObservedMatrix& y, const PenaltyConfig& penalty) {
  EStepPolicy policy;
  policy.e_step = [](const VectorXd& residuals, const MoEPModel& model, const Responsibilities*,
                     EmDiagnostics& diagnostics) {
    MixtureDiagnostics md;
    Responsibilities resp = e_step(residuals, model, &md);
    diagnostics.underflow_entries += md.underflow_entries;
    return resp;
  };
  const Index cols = y.cols();
  const Index omega = y.observed_count();
  policy.objective = [penalty, cols, omega](const VectorXd& residuals, const MoEPModel& model, const Responsibilities&) {
    return penalized_log_likelihood(residuals, model, penalty, cols, omega);
  };
  return policy;
}

namespace {

Responsibilities renormalized(Responsibilities resp) {
  for (Index i = 0; i < resp.entries(); ++i) {
    const double s = resp.gamma.row(i).sum();
    if (s > 0.0) {
      resp.gamma.row(i) /= s;
    } else {
      resp.gamma.row(i).setConstant(1.0 / static_cast<double>(resp.components()));
    }
  }
  return resp;
}

}  // namespace

EmResult run_em(const ObservedMatrix& y, const EmConfig& config, const FactorPair& init, const EStepPolicy& policy) {
  const Index omega = y.observed_count();
  EmResult out;
  out.factors = init;
  out.model = initial_model(config.p_candidates);

  // Lambda as it enters the mixing-weight update, so that the update is the
  // stationary point of the same penalty the objective subtracts.
  PenaltyConfig update_penalty = config.penalty;
  update_penalty.lambda = config.penalty.coefficient(y.cols(), omega) / static_cast<double>(omega);

  std::optional<Responsibilities> previous;
  const int warmup = config.warmup_iterations;
  for (int t = -warmup;; ++t) {
    const bool recorded = t >= 0;
    const MatrixXd fitted = out.factors.product();
    const VectorXd residuals = y.residuals(fitted);
    if (recorded) {
      out.resp = policy.e_step(residuals, out.model, previous ? &*previous : nullptr, out.diagnostics);
    } else {
      // Warm-up treats entries as independent whatever the variant.
      MixtureDiagnostics md;
      out.resp = e_step(residuals, out.model, &md);
      out.diagnostics.underflow_entries += md.underflow_entries;
    }
    if (recorded) {
      const double objective = policy.objective(residuals, out.model, out.resp);
      if (!std::isfinite(objective)) throw NumericalError("EM objective is not finite");
      out.objective_trace.push_back(objective);
      out.component_trace.push_back(out.model.size());
      out.iterations = t;
      if (t > 0) {
        const double prev = out.objective_trace[out.objective_trace.size() - 2];
        if (std::abs(objective - prev) < config.tol * std::max(std::abs(prev), std::numeric_limits<double>::min())) {
          out.converged = true;
          break;
        }
      }
      if (t >= config.max_outer) break;
    }

    // Mixing weights with pruning; the warm-up runs unpenalized.
    const PiUpdate pi = update_pi(out.resp, recorded ? update_penalty : PenaltyConfig{}, omega, true);
    // Responsibilities of the survivors, renormalized so that entries of
    // pruned components are shared among those that remain.
    Responsibilities carried = renormalized(restrict_components(out.resp, pi.survivors));
    MoEPModel next;
    for (std::size_t s = 0; s < pi.survivors.size(); ++s) {
      auto c = out.model.components[static_cast<std::size_t>(pi.survivors[s])];
      c.pi = pi.pi(static_cast<Index>(s));
      next.components.push_back(c);
    }

    // Precisions from the current residuals.
    MixtureDiagnostics md;
    const VectorXd eta = update_eta(carried, residuals, next, &md);
    out.diagnostics.eta_clamped += md.eta_clamped;
    for (std::size_t k = 0; k < next.size(); ++k) next.components[k].eta = eta(static_cast<Index>(k));

    // Factors.
    const ProxWeights weights = ProxWeights::from(carried, next);
    FactorPair candidate;
    if (config.quadratic_fast_path && weights.all_quadratic()) {
      const WeightedL2Result l2 =
          solve_weighted_l2(y, quadratic_weight_matrix(y, weights), config.rank, out.factors, config.l2);
      if (l2.ridge_used) ++out.diagnostics.ridge_used;
      candidate = l2.factors;
    } else {
      const AlmResult alm = solve_weighted_lrmf(y, weights, config.rank, out.factors, config.alm);
      if (!alm.converged) ++out.diagnostics.inner_not_converged;
      candidate = alm.factors;
    }
    if (recorded) {
      // Keep whichever factors score higher on the monitored objective under
      // the updated mixture, so the trace cannot decrease.
      const double keep_score = policy.objective(residuals, next, carried);
      const double candidate_score = policy.objective(y.residuals(candidate.product()), next, carried);
      if (candidate_score >= keep_score) {
        out.factors = std::move(candidate);
      } else {
        ++out.diagnostics.rejected_factor_updates;
      }
    } else {
      out.factors = std::move(candidate);
    }

    out.model = std::move(next);
    previous = std::move(carried);
  }
  out.log_likelihood = mixture_log_likelihood(y.residuals(out.factors.product()), out.model);
  return out;
}

EmResult run_restarts(const ObservedMatrix& y, const EmConfig& config, const EStepPolicy& policy) {
  config.validate();
  const Index m = y.rows();
  const Index n = y.cols();
  if (config.rank > std::min(m, n)) throw InputError("rank exceeds matrix dimensions");
  if (y.observed_count() < config.rank * (m + n)) {
    throw InputError("too few observed entries: " + std::to_string(y.observed_count()) + " < r(m+n) = " +
                     std::to_string(config.rank * (m + n)));
  }
  std::optional<EmResult> best;
  std::size_t failed = 0;
  std::string last_failure;
  for (int r = 0; r < config.restarts; ++r) {
    const std::uint64_t seed = restart_seed(config.seed, r);
    try {
      EmResult run = run_em(y, config, random_factors(y, config.rank, seed), policy);
      run.restart = r;
      run.restart_seed = seed;
      if (!best || run.objective() > best->objective()) best = std::move(run);
    } catch (const NumericalError& e) {
      ++failed;
      last_failure = e.what();
    }
  }
  if (!best) throw NumericalError("all restarts failed: " + last_failure);
  best->diagnostics.failed_restarts = failed;
  return std::move(*best);
}

}  // namespace detail

EmResult fit_pmoep(const ObservedMatrix& y, const EmConfig& config) {
  return detail::run_restarts(y, config, detail::mixture_policy(y, config.penalty));
}

EmResult fit_pmoep_from(const ObservedMatrix& y, const EmConfig& config, const FactorPair& init) {
  config.validate();
  return detail::run_em(y, config, init, detail::mixture_policy(y, config.penalty));
}

}  // namespace pmoep
