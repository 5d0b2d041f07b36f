#ifndef BQO_SUBSOLVER_HPP
#define BQO_SUBSOLVER_HPP

#include "bqo/dual.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bqo {

/// Local block of H = θQ̄ + A/2C + λI plus the inner stopping rule.
struct SubproblemParams {
  double c = 0.1;
  double theta = 1.0;
  double lambda = 1e-4;
  int inner_epochs = 10;
  double stop_ratio = 0.1;
};

/// Direction block d for one worker and its image u = Σ d φ.
struct DirectionState {
  std::vector<std::vector<double>> d;  // aligned with DualState entries
  ModelVector u;
  std::vector<double> t;               // t_i = Σ_y d_{i,y}
  double g_value = 0.0;                // g_H(d), tracked incrementally

  static DirectionState zero(const DualState& dual, Eigen::Index dimension);
  bool is_zero() const;
};

struct EntryRef {
  std::size_t instance = 0;
  std::size_t entry = 0;
};

/// λ = scale · (θ · max‖φ‖² + 1/(2C)) over the local working set.
double scaled_lambda(const DualState& dual, double theta, double c, double scale);

/// Gradient of g_H at one coordinate.
double direction_gradient(EntryRef ref, const DirectionState& state, const DualState& dual,
                          const ModelVector& w, const SubproblemParams& params);

/// Exact minimization of g_H along one coordinate, clamped to α + d ≥ 0.
/// Returns the applied step.
double coordinate_update(EntryRef ref, DirectionState& state, const DualState& dual,
                         const ModelVector& w, const SubproblemParams& params);

/// g_H(d) recomputed from scratch.
double direction_objective(const DirectionState& state, const DualState& dual,
                           const ModelVector& w, const SubproblemParams& params);

/// Solves the local direction subproblem by randomized dual coordinate descent.
/// Keeps the first solve's largest projected gradient as the reference for
/// the inner stopping rule, so one solver belongs to one worker.
class DirectionSolver {
 public:
  DirectionState solve(const DualState& dual, const ModelVector& w,
                       const SubproblemParams& params, std::uint64_t seed);

  int last_epochs() const { return last_epochs_; }
  std::optional<double> reference_gradient() const { return reference_; }

 private:
  std::optional<double> reference_;
  int last_epochs_ = 0;
};

}  // namespace bqo

#endif  // BQO_SUBSOLVER_HPP
