#ifndef PMOEP_TYPES_HPP
#define PMOEP_TYPES_HPP

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmoep {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Error hierarchy. The CLI maps each kind to its own exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

// Data matrix Y together with its observation mask. The observed index set
// is cached as column-major linear indices; every per-entry quantity over the
// observed set (residuals, responsibilities) follows this order.
class ObservedMatrix {
 public:
  ObservedMatrix() = default;
  ObservedMatrix(MatrixXd values, Mask mask);

  // All entries observed.
  explicit ObservedMatrix(MatrixXd values);

  // NaN entries in `values` become missing.
  static ObservedMatrix from_nan(const MatrixXd& values);

  const MatrixXd& values() const { return values_; }
  const Mask& mask() const { return mask_; }
  const std::vector<Index>& omega() const { return omega_; }

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  Index observed_count() const { return static_cast<Index>(omega_.size()); }

  // Y - X restricted to the observed set.
  template <typename Derived>
  VectorXd residuals(const Eigen::MatrixBase<Derived>& fitted) const {
    VectorXd e(observed_count());
    const double* y = values_.data();
    for (Index k = 0; k < e.size(); ++k) {
      const Index idx = omega_[static_cast<std::size_t>(k)];
      e(k) = y[idx] - fitted.derived().coeff(idx % rows(), idx / rows());
    }
    return e;
  }

  // Observed values as a vector in omega order.
  VectorXd observed_values() const;

 private:
  MatrixXd values_;
  Mask mask_;
  std::vector<Index> omega_;
};

// Low-rank factors, Y ~ U V^T.
struct FactorPair {
  MatrixXd U;  // m x r
  MatrixXd V;  // n x r

  Index rank() const { return U.cols(); }
  MatrixXd product() const { return U * V.transpose(); }
};

// Stateless seed mixer used to derive per-restart and per-replicate streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace pmoep

#endif  // PMOEP_TYPES_HPP
