#include "pmoep/types.hpp"

#include <cmath>

namespace pmoep {

ObservedMatrix::ObservedMatrix(MatrixXd values, Mask mask) : values_(std::move(values)), mask_(std::move(mask)) {
  if (mask_.rows() != values_.rows() || mask_.cols() != values_.cols()) {
    throw ShapeError("mask shape " + std::to_string(mask_.rows()) + "x" + std::to_string(mask_.cols()) +
                     " does not match data shape " + std::to_string(values_.rows()) + "x" +
                     std::to_string(values_.cols()));
  }
  omega_.reserve(static_cast<std::size_t>(mask_.count()));
  for (Index idx = 0; idx < values_.size(); ++idx) {
    if (!mask_(idx)) continue;
    if (!std::isfinite(values_(idx))) throw InputError("observed entry " + std::to_string(idx) + " is not finite");
    omega_.push_back(idx);
  }
  // Missing entries carry no information; keep them finite so dense products stay clean.
  for (Index idx = 0; idx < values_.size(); ++idx) {
    if (!mask_(idx)) values_(idx) = 0.0;
  }
}

ObservedMatrix::ObservedMatrix(MatrixXd values)
    : ObservedMatrix(values, Mask::Constant(values.rows(), values.cols(), true)) {}

ObservedMatrix ObservedMatrix::from_nan(const MatrixXd& values) {
  Mask mask = !values.array().isNaN();
  return ObservedMatrix(values, std::move(mask));
}

VectorXd ObservedMatrix::observed_values() const {
  VectorXd y(observed_count());
  for (Index k = 0; k < y.size(); ++k) y(k) = values_(omega_[static_cast<std::size_t>(k)]);
  return y;
}

}  // namespace pmoep
