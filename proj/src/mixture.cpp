#include "pmoep/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pmoep {

void MoEPModel::validate() const {
  if (components.empty()) throw InputError("mixture has no components");
  double total = 0.0;
  for (const auto& c : components) {
    c.params().validate();
    if (!(c.pi >= 0.0) || !std::isfinite(c.pi)) throw InputError("mixing proportion out of domain");
    total += c.pi;
  }
  if (std::abs(total - 1.0) > 1e-10) {
    throw InputError("mixing proportions sum to " + std::to_string(total) + ", expected 1");
  }
}

double MoEPModel::log_pdf(double x) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) {
    if (c.pi <= 0.0) continue;
    const double t = std::log(c.pi) + ep_log_normalizer(c.p, c.eta) - c.eta * std::pow(std::abs(x), c.p);
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (!std::isfinite(best)) return best;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - best);
  return best + std::log(sum);
}

void PenaltyConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("penalty lambda must be >= 0");
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw InputError("penalty epsilon must lie in (0, 1e-2]");
  if (!(dof > 0.0)) throw InputError("penalty dof must be positive");
}

MatrixXd weighted_log_densities(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model) {
  const Index n = residuals.size();
  const auto K = static_cast<Index>(model.size());
  MatrixXd out(n, K);
  for (Index k = 0; k < K; ++k) {
    const auto& c = model.components[static_cast<std::size_t>(k)];
    const double offset = std::log(c.pi) + ep_log_normalizer(c.p, c.eta);
    if (c.p == 2.0) {
      out.col(k) = offset - c.eta * residuals.array().square();
    } else if (c.p == 1.0) {
      out.col(k) = offset - c.eta * residuals.array().abs();
    } else {
      out.col(k) = offset - c.eta * residuals.array().abs().pow(c.p);
    }
  }
  return out;
}

VectorXd normalize_log_rows(MatrixXd& log_weights, MixtureDiagnostics* diagnostics) {
  const Index K = log_weights.cols();
  VectorXd lse(log_weights.rows());
  for (Index i = 0; i < log_weights.rows(); ++i) {
    const double best = log_weights.row(i).maxCoeff();
    if (!std::isfinite(best)) {
      log_weights.row(i).setConstant(1.0 / static_cast<double>(K));
      lse(i) = -std::numeric_limits<double>::infinity();
      if (diagnostics) ++diagnostics->underflow_entries;
      continue;
    }
    double sum = 0.0;
    for (Index k = 0; k < K; ++k) {
      const double w = std::exp(log_weights(i, k) - best);
      log_weights(i, k) = w;
      sum += w;
    }
    log_weights.row(i) /= sum;
    lse(i) = best + std::log(sum);
  }
  return lse;
}

Responsibilities e_step(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                        MixtureDiagnostics* diagnostics) {
  if (!residuals.allFinite()) throw InputError("e_step: residuals must be finite on the observed set");
  Responsibilities resp{weighted_log_densities(residuals, model)};
  normalize_log_rows(resp.gamma, diagnostics);
  return resp;
}

PiUpdate update_pi(const Responsibilities& resp, const PenaltyConfig& penalty, Index omega_size,
                   bool allow_large_penalty) {
  const Index K = resp.components();
  if (K == 0) throw InputError("update_pi: no components");
  if (omega_size <= 0) throw InputError("update_pi: empty observed set");
  PiUpdate out;
  if (K == 1) {
    out.pi = VectorXd::Ones(1);
    out.raw = out.pi;
    out.survivors = {0};
    return out;
  }
  const double d_hat = penalty.dof * static_cast<double>(K);
  const double denom = 1.0 - penalty.lambda * d_hat;
  if (!(denom > 0.0) && !allow_large_penalty) {
    throw InputError("penalty too large for current K (lambda * D_hat = " + std::to_string(penalty.lambda * d_hat) +
                     " >= 1, K = " + std::to_string(K) + ")");
  }
  const VectorXd share = resp.mass() / static_cast<double>(omega_size);
  out.raw = (share.array() - penalty.lambda * penalty.dof).max(0.0).matrix();
  if (denom > 0.0) out.raw /= denom;
  for (Index k = 0; k < K; ++k) {
    if (out.raw(k) > 0.0) out.survivors.push_back(k);
  }
  if (out.survivors.empty()) {
    Index best = 0;
    share.maxCoeff(&best);
    out.survivors.push_back(best);
  }
  out.pi.resize(static_cast<Index>(out.survivors.size()));
  for (std::size_t s = 0; s < out.survivors.size(); ++s) {
    out.pi(static_cast<Index>(s)) = std::max(out.raw(out.survivors[s]), 0.0);
  }
  const double total = out.pi.sum();
  if (total > 0.0) {
    out.pi /= total;
  } else {
    out.pi.setConstant(1.0 / static_cast<double>(out.pi.size()));
  }
  return out;
}

VectorXd update_eta(const Responsibilities& resp, const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                    MixtureDiagnostics* diagnostics) {
  const Index K = resp.components();
  if (static_cast<std::size_t>(K) != model.size()) throw ShapeError("update_eta: responsibilities do not match model");
  if (resp.entries() != residuals.size()) throw ShapeError("update_eta: responsibilities do not match residuals");
  VectorXd eta(K);
  const auto abs_e = residuals.array().abs();
  for (Index k = 0; k < K; ++k) {
    const double p = model.components[static_cast<std::size_t>(k)].p;
    const double n_k = resp.gamma.col(k).sum();
    double moment = 0.0;
    if (p == 2.0) {
      moment = (resp.gamma.col(k).array() * abs_e.square()).sum();
    } else if (p == 1.0) {
      moment = (resp.gamma.col(k).array() * abs_e).sum();
    } else {
      moment = (resp.gamma.col(k).array() * abs_e.pow(p)).sum();
    }
    double value = moment > 0.0 ? n_k / (p * moment) : kEtaMax;
    if (!(n_k > 0.0)) value = model.components[static_cast<std::size_t>(k)].eta;
    const double clamped = std::clamp(value, kEtaMin, kEtaMax);
    if (diagnostics && (clamped != value || moment <= 0.0)) ++diagnostics->eta_clamped;
    eta(k) = clamped;
  }
  return eta;
}

double mixture_log_likelihood(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model) {
  MatrixXd logw = weighted_log_densities(residuals, model);
  double total = 0.0;
  for (Index i = 0; i < logw.rows(); ++i) {
    const double best = logw.row(i).maxCoeff();
    if (!std::isfinite(best)) return -std::numeric_limits<double>::infinity();
    total += best + std::log((logw.row(i).array() - best).exp().sum());
  }
  return total;
}

double mixing_penalty(const MoEPModel& model, const PenaltyConfig& penalty, Index cols, Index omega_size) {
  if (penalty.lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& c : model.components) sum += penalty.dof * std::log1p(c.pi / penalty.epsilon);
  return penalty.coefficient(cols, omega_size) * sum;
}

double penalized_log_likelihood(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                                const PenaltyConfig& penalty, Index cols, Index omega_size) {
  return mixture_log_likelihood(residuals, model) - mixing_penalty(model, penalty, cols, omega_size);
}

Responsibilities restrict_components(const Responsibilities& resp, const std::vector<Index>& survivors) {
  Responsibilities out{MatrixXd(resp.entries(), static_cast<Index>(survivors.size()))};
  for (std::size_t s = 0; s < survivors.size(); ++s) out.gamma.col(static_cast<Index>(s)) = resp.gamma.col(survivors[s]);
  return out;
}

}  // namespace pmoep
