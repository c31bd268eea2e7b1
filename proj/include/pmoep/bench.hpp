#ifndef PMOEP_BENCH_HPP
#define PMOEP_BENCH_HPP

#include "pmoep/ep.hpp"
#include "pmoep/mixture.hpp"
#include "pmoep/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pmoep {

enum class NoiseRegime { gaussian, ep, laplace, sparse, mixture1, mixture2 };

inline constexpr std::array<NoiseRegime, 6> kAllRegimes{NoiseRegime::gaussian, NoiseRegime::ep,
                                                        NoiseRegime::laplace,  NoiseRegime::sparse,
                                                        NoiseRegime::mixture1, NoiseRegime::mixture2};

std::string_view regime_name(NoiseRegime regime);
std::optional<NoiseRegime> parse_regime(std::string_view name);

// A univariate noise law. Laplace takes its scale b (variance 2 b^2);
// gaussian takes its variance.
struct NoiseLaw {
  enum class Kind { zero, gaussian, laplace, exp_power, uniform };
  Kind kind = Kind::zero;
  double a = 0.0;  // variance | scale | p | lower
  double b = 0.0;  // -        | -     | eta | upper

  static NoiseLaw zero() { return {}; }
  static NoiseLaw gaussian(double variance) { return {Kind::gaussian, variance, 0.0}; }
  static NoiseLaw laplace(double scale) { return {Kind::laplace, scale, 0.0}; }
  static NoiseLaw exp_power(double p, double eta) { return {Kind::exp_power, p, eta}; }
  static NoiseLaw uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }

  template <typename Rng>
  double draw(Rng& rng) const {
    switch (kind) {
      case Kind::zero:
        return 0.0;
      case Kind::gaussian:
        return std::normal_distribution<double>(0.0, std::sqrt(a))(rng);
      case Kind::laplace: {
        const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        return -a * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
      }
      case Kind::exp_power:
        return ep_draw(rng, EPParams<double>{a, b});
      case Kind::uniform:
        return std::uniform_real_distribution<double>(a, b)(rng);
    }
    return 0.0;
  }

  double log_pdf(double x) const;
};

// Disjoint blocks of observed entries, each with its own law. Fractions sum to 1.
struct NoiseModel {
  struct Block {
    double fraction;
    NoiseLaw law;
  };
  std::vector<Block> blocks;

  // Density of the i.i.d. mixture with the block fractions as weights.
  double log_pdf(double x) const;

  template <typename Rng>
  double draw(Rng& rng) const {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (const auto& block : blocks) {
      if (u < block.fraction) return block.law.draw(rng);
      u -= block.fraction;
    }
    return blocks.back().law.draw(rng);
  }
};

NoiseModel regime_noise(NoiseRegime regime);

struct SyntheticSpec {
  Index m = 40;
  Index n = 20;
  Index r = 4;
  double missing_fraction = 0.2;
  NoiseRegime regime = NoiseRegime::gaussian;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  ObservedMatrix observed;  // Y_no with its mask
  MatrixXd Y_gt;
  MatrixXd U_gt;
  MatrixXd V_gt;
  MatrixXd noise;                        // zero on missing entries
  Eigen::MatrixXi source;                // noise block per entry, -1 when missing
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Shape candidates and lambda used for a regime in benchmark runs. The
// candidate set is sized to the expected noise complexity of the regime.
struct RegimePreset {
  std::vector<double> p_candidates;
  double lambda;
};
RegimePreset regime_preset(NoiseRegime regime);

// Candidate set shared by all regimes for lambda selection runs.
inline const std::vector<double> kSelectionCandidates{0.2, 0.5, 1.0, 1.5, 2.0};
inline const std::vector<double> kLambdaGrid{0.001, 0.005, 0.01, 0.05, 0.1, 0.15, 0.3};

// Video-shaped task: frames of a rank-r background, each flattened into a
// column (pixel i at row i, column-major within the frame), with light
// Gaussian noise everywhere and a moving square block of heavy EP noise.
struct VideoSpec {
  Index height = 16;
  Index width = 16;
  Index frames = 20;
  Index r = 2;
  Index block = 4;            // side of the square block
  double background_variance = 0.01;
  double block_p = 0.5;
  double block_eta = 2.0;
  std::uint64_t seed = 0;
};

struct VideoData {
  ObservedMatrix observed;
  MatrixXd Y_gt;
  Mask foreground;  // true inside the block
};

// The block moves one pixel right and down per frame and wraps around.
VideoData generate_video(const VideoSpec& spec);

/// Responsibility of the component with the largest variance, laid out as a
/// matrix of Y's shape (zero on missing entries).
MatrixXd heavy_component_map(const ObservedMatrix& y, const MoEPModel& model, const Responsibilities& resp);

/// Largest principal angle between the column spans of A and B, in [0, pi/2].
/// Uses the arcsine form, which stays accurate for tiny angles.
template <typename DerivedA, typename DerivedB>
double subspace_angle(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B) {
  const auto basis = [](const MatrixXd& X) {
    Eigen::JacobiSVD<MatrixXd> svd(X, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? s(0) * 1e-12 * static_cast<double>(std::max(X.rows(), X.cols())) : 0.0;
    Index rank = 0;
    while (rank < s.size() && s(rank) > cutoff) ++rank;
    return MatrixXd(svd.matrixU().leftCols(rank));
  };
  MatrixXd qa = basis(A.template cast<double>());
  MatrixXd qb = basis(B.template cast<double>());
  if (qa.cols() < qb.cols()) std::swap(qa, qb);
  if (qb.cols() == 0) return 0.0;
  const MatrixXd rest = qb - qa * (qa.transpose() * qb);
  const double s = Eigen::JacobiSVD<MatrixXd>(rest).singularValues()(0);
  return std::asin(std::min(1.0, s));
}

struct EvalReport {
  std::array<double, 6> c{};  // C1..C6
  double runtime_seconds = 0.0;
  std::size_t k_final = 0;
  bool rank_deficient = false;

  double C(int i) const { return c[static_cast<std::size_t>(i - 1)]; }
};

/// C1 = ||W .* (Y_no - U V^T)||_1, C2 = the Frobenius analogue, C3 / C4 the
/// same against Y_gt over all entries, C5 / C6 the largest principal angles
/// between (U_gt, U) and (V_gt, V).
EvalReport evaluate(const FactorPair& factors, const SyntheticData& truth);

struct FMeasure {
  double precision = 0.0;
  double recall = 0.0;
  double fmeasure = 0.0;
  double threshold = 0.0;
};

/// Best F-measure over thresholds on |detected|, scanning at most
/// `max_candidates` of the sorted unique magnitudes.
FMeasure fmeasure(const MatrixXd& detected, const Mask& truth, std::size_t max_candidates = 512);

/// Monte-Carlo KL(true || fitted) from `samples` draws of the true noise.
double density_recovery_divergence(const MoEPModel& fitted, const NoiseModel& truth, std::size_t samples,
                                   std::uint64_t seed);

/// Fitted and true densities on a grid for plotting.
struct DensityCurve {
  std::vector<double> x;
  std::vector<double> fitted;
  std::vector<double> truth;
};
DensityCurve density_curve(const MoEPModel& fitted, const NoiseModel& truth, double lo, double hi, std::size_t points);

struct SvdBaselineOptions {
  int max_iterations = 2000;
  double tolerance = 1e-10;  // relative change of the imputed entries
};

/// Truncated SVD with iterative imputation of missing entries: start from
/// zeros, refill missing entries from the rank-r reconstruction, repeat.
FactorPair svd_baseline(const ObservedMatrix& y, Index rank, const SvdBaselineOptions& options = {});

}  // namespace pmoep

#endif  // PMOEP_BENCH_HPP
