#include "pmoep/select.hpp"

#include <cmath>

namespace pmoep {

double bic_score(const EmResult& result, Index omega_size, double dof) {
  if (omega_size < 1) throw InputError("bic_score: empty observed set");
  const double params = dof * static_cast<double>(result.k_final());
  return result.log_likelihood - 0.5 * params * std::log(static_cast<double>(omega_size));
}

SelectionReport select_lambda(const ObservedMatrix& y, const EmConfig& base, const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw InputError("lambda grid is empty");
  SelectionReport report;
  bool any = false;
  bool numerical_failure = false;
  for (double lambda : lambda_grid) {
    SelectionRecord record;
    record.lambda = lambda;
    EmConfig config = base;
    config.penalty.lambda = lambda;
    try {
      record.result = fit_pmoep(y, config);
      record.bic = bic_score(*record.result, y.observed_count(), config.penalty.dof);
    } catch (const InputError& e) {
      record.error = e.what();
    } catch (const NumericalError& e) {
      record.error = e.what();
      numerical_failure = true;
    }
    report.records.push_back(std::move(record));
    const auto& r = report.records.back();
    if (!r.ok()) continue;
    const auto& best = report.records[report.chosen];
    if (!any || r.bic > best.bic || (r.bic == best.bic && r.lambda > best.lambda)) {
      report.chosen = report.records.size() - 1;
      any = true;
    }
  }
  if (!any) {
    const std::string msg = "every lambda candidate failed: " + report.records.back().error;
    if (numerical_failure) throw NumericalError(msg);
    throw InputError(msg);
  }
  return report;
}

}  // namespace pmoep
