#ifndef PMOEP_MRF_HPP
#define PMOEP_MRF_HPP

#include "pmoep/em.hpp"
#include "pmoep/mixture.hpp"
#include "pmoep/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pmoep {

enum class Neighborhood {
  spatial4_temporal2,  // 4-connected within a frame plus the same pixel in adjacent frames
  spatial4,            // within-frame only
};

// Maps matrix entries to video coordinates. With `pixels_along_rows`, row i
// of Y is pixel (i % height, i / height) and column j is frame j; otherwise
// the roles of rows and columns swap.
struct GridShape {
  Index height = 0;
  Index width = 0;
  Index frames = 0;
  bool pixels_along_rows = true;
  Neighborhood scheme = Neighborhood::spatial4_temporal2;

  Index pixels() const { return height * width; }
  /// Throws ShapeError unless the grid covers an m x n matrix.
  void check(Index m, Index n) const;
};

/// Parses "HxWxF".
GridShape parse_grid(const std::string& text);

// Adjacency over the observed entries (omega order), plus a proper coloring:
// entries sharing a color are never neighbors.
struct NeighborGraph {
  std::vector<std::vector<Index>> adjacency;
  std::vector<std::vector<Index>> color_classes;

  static NeighborGraph build(const ObservedMatrix& y, const GridShape& grid);
  Index entries() const { return static_cast<Index>(adjacency.size()); }
  std::size_t pair_count() const;  // unordered neighbor pairs
};

struct MrfConfig {
  double tau = 10.0;
  int max_sweeps = 200;
  double damping = 0.5;
  double tolerance = 1e-6;  // max-abs change of gamma between sweeps

  void validate() const;
};

struct MrfDiagnostics {
  int sweeps = 0;
  bool converged = true;
};

/// Mean-field fixed point gamma_k ∝ pi_k f_k(e) exp(tau sum_{q in N} gamma_qk),
/// iterated from `gamma_init` by damped sweeps over the color classes. A
/// class is updated all at once from the current state of the others. With
/// tau = 0 this is e_step.
Responsibilities variational_e_step(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model,
                                    const NeighborGraph& graph, const MrfConfig& mrf,
                                    const Responsibilities& gamma_init, MrfDiagnostics* diagnostics = nullptr);

/// sum gamma (log pi + log f) + tau sum_{pairs} sum_k gamma_ak gamma_bk - sum gamma log gamma,
/// pairs unordered, up to the MRF normalizer.
double lower_bound(const Eigen::Ref<const VectorXd>& residuals, const MoEPModel& model, const NeighborGraph& graph,
                   const MrfConfig& mrf, const Responsibilities& resp);

/// Variational EM with the MRF prior. The M-step is the one of fit_pmoep;
/// the recorded trace is lower_bound minus the mixing penalty. With tau = 0
/// the run is identical to fit_pmoep.
EmResult fit_pmoep_mrf(const ObservedMatrix& y, const GridShape& grid, const EmConfig& config, const MrfConfig& mrf);

}  // namespace pmoep

#endif  // PMOEP_MRF_HPP
