#ifndef PMOEP_SELECT_HPP
#define PMOEP_SELECT_HPP

#include "pmoep/em.hpp"
#include "pmoep/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pmoep {

/// Fitted mixture log-likelihood minus (1/2) (sum_k D_k) log |Omega|.
double bic_score(const EmResult& result, Index omega_size, double dof = 2.0);

struct SelectionRecord {
  double lambda = 0.0;
  std::optional<EmResult> result;  // empty when the fit failed
  std::string error;
  double bic = 0.0;

  bool ok() const { return result.has_value(); }
  std::size_t k_final() const { return result ? result->k_final() : 0; }
};

struct SelectionReport {
  std::vector<SelectionRecord> records;  // in grid order
  std::size_t chosen = 0;                // index into records

  const SelectionRecord& best() const { return records[chosen]; }
};

/// Fits every lambda of the grid with the same restart seeds and keeps the
/// highest BIC; ties go to the larger lambda.
SelectionReport select_lambda(const ObservedMatrix& y, const EmConfig& base, const std::vector<double>& lambda_grid);

}  // namespace pmoep

#endif  // PMOEP_SELECT_HPP
