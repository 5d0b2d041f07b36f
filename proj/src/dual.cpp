#include "bqo/dual.hpp"

#include "bqo/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bqo {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(c > 0.0, "C must be positive");
  require(theta >= 0.0, "theta must be positive (or 0 for the worker count)");
  require(lambda >= 0.0, "lambda must be positive (or 0 for the scaled default)");
  require(lambda > 0.0 || lambda_scale > 0.0, "lambda scale must be positive");
  require(hash_bits >= 10 && hash_bits <= kMaxHashBits, "hash bits must lie in [10, 30]");
  require(workers >= 1, "worker count must be at least 1");
  require(inner_epochs >= 1, "inner epochs must be at least 1");
  require(inner_stop_ratio >= 0.0, "inner stop ratio must be non-negative");
  require(outer_iters >= 1, "outer iterations must be at least 1");
  require(inference_interval >= 1, "inference interval must be at least 1");
  require(ws_violation_tol > 0.0, "working-set tolerance must be positive");
  require(prune_after >= 0, "prune_after must be non-negative");
  require(converge_patience >= 1, "convergence patience must be at least 1");
}

bool InstanceState::contains(const StructureKey& y) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const WorkingSetEntry& e) { return e.structure == y; });
}

std::size_t DualState::working_set_size() const {
  std::size_t n = 0;
  for (const auto& inst : instances) n += inst.entries.size();
  return n;
}

double DualState::min_alpha() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& inst : instances) {
    for (const auto& e : inst.entries) m = std::min(m, e.alpha);
  }
  return m;
}

DualState make_dual_state(std::span<const TaskInstance> shard) {
  DualState dual;
  dual.instances.reserve(shard.size());
  for (std::size_t k = 0; k < shard.size(); ++k) {
    InstanceState inst;
    inst.instance_id = shard[k].id;
    inst.local_index = k;
    inst.gold = shard[k].gold;
    dual.instances.push_back(std::move(inst));
  }
  return dual;
}

WorkingSetEntry make_entry(const Task& task, const TaskInstance& x, StructureKey y) {
  WorkingSetEntry entry;
  entry.phi = task.phi_diff(x, y);
  entry.delta = task.loss(x.gold, y);
  entry.phi_sq_norm = entry.phi.squared_norm();
  entry.structure = std::move(y);
  return entry;
}

bool add_entry(InstanceState& instance, const Task& task, const TaskInstance& x, StructureKey y) {
  if (instance.contains(y)) return false;
  instance.entries.push_back(make_entry(task, x, std::move(y)));
  return true;
}

std::size_t saturate_working_set(DualState& dual, const Task& task,
                                 std::span<const TaskInstance> shard) {
  std::size_t added = 0;
  for (auto& inst : dual.instances) {
    const TaskInstance& x = shard[inst.local_index];
    for (auto& y : task.enumerate_structures(x)) {
      if (y == x.gold) continue;
      if (add_entry(inst, task, x, std::move(y))) ++added;
    }
  }
  return added;
}

double local_dual_terms(const DualState& dual, double c) {
  double acc = 0.0;
  for (const auto& inst : dual.instances) {
    acc += inst.alpha_sum * inst.alpha_sum / (4.0 * c);
    for (const auto& e : inst.entries) acc -= e.alpha * e.delta;
  }
  return acc;
}

double dual_objective(std::span<const DualState* const> states, const ModelVector& w, double c) {
  double terms = 0.0;
  for (const DualState* s : states) terms += local_dual_terms(*s, c);
  return 0.5 * w.squaredNorm() + terms;
}

double dual_objective(const DualState& state, const ModelVector& w, double c) {
  const DualState* one[] = {&state};
  return dual_objective(one, w, c);
}

ModelVector local_weight_sum(const DualState& dual, Eigen::Index dimension) {
  ModelVector w = ModelVector::Zero(dimension);
  for (const auto& inst : dual.instances) {
    for (const auto& e : inst.entries) {
      if (e.alpha != 0.0) e.phi.add_to(w, e.alpha);
    }
  }
  return w;
}

ModelVector reconstruct_w(std::span<const DualState* const> states, int hash_bits) {
  const Eigen::Index dim = Eigen::Index{1} << hash_bits;
  ModelVector w = ModelVector::Zero(dim);
  for (const DualState* s : states) w += local_weight_sum(*s, dim);
  return w;
}

double alpha_sum_drift(const DualState& dual) {
  double worst = 0.0;
  for (const auto& inst : dual.instances) {
    double sum = 0.0;
    for (const auto& e : inst.entries) sum += e.alpha;
    worst = std::max(worst, std::abs(sum - inst.alpha_sum) / std::max(1.0, std::abs(sum)));
  }
  return worst;
}

void reconcile_alpha_sums(DualState& dual) {
  for (auto& inst : dual.instances) {
    double sum = 0.0;
    for (const auto& e : inst.entries) sum += e.alpha;
    inst.alpha_sum = sum;
  }
}

double local_slack_terms(const Task& task, std::span<const TaskInstance> data,
                         const ModelVector& w, double c) {
  double acc = 0.0;
  for (const TaskInstance& x : data) {
    const double xi = std::max(0.0, task.loss_augmented_argmax(w, x).violation);
    acc += xi * xi;
  }
  return c * acc;
}

double primal_objective(const ModelVector& w, std::span<const TaskInstance> data, const Task& task,
                        double c) {
  return 0.5 * w.squaredNorm() + local_slack_terms(task, data, w, c);
}

}  // namespace bqo
