#ifndef BQO_DUAL_HPP
#define BQO_DUAL_HPP

#include "bqo/config.hpp"
#include "bqo/sparse_vector.hpp"
#include "bqo/task.hpp"

#include <span>
#include <vector>

namespace bqo {

/// One dual coordinate α_{i,y} with the row data of Q and v it needs.
struct WorkingSetEntry {
  StructureKey structure;
  SparseVec phi;          // Φ(x_i, y_i) − Φ(x_i, y)
  double delta = 0.0;     // Δ(y_i, y)
  double alpha = 0.0;
  double phi_sq_norm = 0.0;
  int zero_streak = 0;    // consecutive outer iterations ending with α = 0
};

struct InstanceState {
  std::int64_t instance_id = 0;
  std::size_t local_index = 0;  // position in the worker's shard
  StructureKey gold;
  std::vector<WorkingSetEntry> entries;
  double alpha_sum = 0.0;       // s_i

  bool contains(const StructureKey& y) const;
};

/// One worker's slice of α.
struct DualState {
  std::vector<InstanceState> instances;

  std::size_t working_set_size() const;
  double min_alpha() const;
};

DualState make_dual_state(std::span<const TaskInstance> shard);

WorkingSetEntry make_entry(const Task& task, const TaskInstance& x, StructureKey y);

/// Adds entry (i, y) with α = 0. Returns false when y is already present.
bool add_entry(InstanceState& instance, const Task& task, const TaskInstance& x, StructureKey y);

/// Force-adds every non-gold structure of every instance.
std::size_t saturate_working_set(DualState& dual, const Task& task,
                                 std::span<const TaskInstance> shard);

/// Σ_i s_i²/(4C) − Σ_{i,y} α Δ for one worker, in instance then entry order.
double local_dual_terms(const DualState& dual, double c);

/// f(α) = ½‖w‖² + (1/4C) Σ s_i² − Σ α Δ over all workers, summed in rank order.
double dual_objective(std::span<const DualState* const> states, const ModelVector& w, double c);
double dual_objective(const DualState& state, const ModelVector& w, double c);

/// ∇f(α)_{(i,y)} = wᵀφ + s_i/(2C) − Δ.
inline double dual_gradient_entry(const WorkingSetEntry& entry, double alpha_sum,
                                  const ModelVector& w, double c) {
  return entry.phi.dot(w) + alpha_sum / (2.0 * c) - entry.delta;
}

/// Σ α φ for one worker.
ModelVector local_weight_sum(const DualState& dual, Eigen::Index dimension);
ModelVector reconstruct_w(std::span<const DualState* const> states, int hash_bits);

/// Largest |s_i − Σ α| / max(1, |s_i|) over instances.
double alpha_sum_drift(const DualState& dual);
/// Recomputes every s_i from its entries.
void reconcile_alpha_sums(DualState& dual);

/// C Σ ξ_i² over the given instances, ξ_i = max(0, max_y Δ − wᵀφ).
double local_slack_terms(const Task& task, std::span<const TaskInstance> data,
                         const ModelVector& w, double c);
/// ½‖w‖² + C Σ ξ_i².
double primal_objective(const ModelVector& w, std::span<const TaskInstance> data, const Task& task,
                        double c);

}  // namespace bqo

#endif  // BQO_DUAL_HPP
