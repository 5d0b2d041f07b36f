#ifndef BQO_DRIVER_HPP
#define BQO_DRIVER_HPP

#include "bqo/comm.hpp"
#include "bqo/config.hpp"
#include "bqo/dual.hpp"
#include "bqo/subsolver.hpp"
#include "bqo/task.hpp"

#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace bqo {

struct IterationStats {
  int outer_iter = 0;
  double dual_obj = 0.0;
  double primal_obj = std::numeric_limits<double>::quiet_NaN();  // audit runs only
  double eta = 0.0;
  double eta_star = 0.0;
  std::size_t ws_added = 0;
  std::size_t ws_size = 0;
  double time_inference_s = 0.0;
  double time_learning_s = 0.0;
  double time_comm_s = 0.0;
  double wall_time_s = 0.0;  // this iteration only
  bool converged = false;
  double consistency_error = std::numeric_limits<double>::quiet_NaN();  // audit runs only
};

/// Inputs of the exact line search. The A terms already carry the 1/(2C).
struct LineSearchScalars {
  double w_dw = 0.0;       // wᵀΔw
  double dw_dw = 0.0;      // ΔwᵀΔw
  double alpha_a_d = 0.0;  // αᵀ(A/2C)d = Σ s_i t_i / 2C
  double d_a_d = 0.0;      // dᵀ(A/2C)d = Σ t_i² / 2C
  double v_d = 0.0;        // vᵀd
};

struct StepSize {
  double eta = 0.0;
  double eta_star = 0.0;
  bool converged = false;  // direction is numerically zero
};

inline constexpr double kLineSearchMinCurvature = 1e-12;

/// η = min(cap, η*) with η* the exact minimizer of f(α + ηd).
StepSize line_search(const LineSearchScalars& scalars, double cap);

/// max{η : α + ηd ≥ 0}; +∞ when d has no negative coordinate.
double feasibility_cap(const DualState& dual, const DirectionState& direction);

/// Adds the most violated structure of each instance whose violation exceeds
/// ξ_i + tol, where ξ_i = s_i/(2C). Returns the number of entries added.
std::size_t grow_working_set(DualState& dual, const ModelVector& w, const Task& task,
                             std::span<const TaskInstance> shard, double c, double tol);

class Trainer;
using IterationObserver = std::function<void(const IterationStats&, const Trainer&)>;

struct TrainResult {
  ModelVector w;
  std::vector<IterationStats> stats;
};

/// One worker's view of the distributed solver. Every worker of a cluster
/// must drive its Trainer through the same sequence of calls.
class Trainer {
 public:
  Trainer(const Task& task, std::span<const TaskInstance> shard, TrainConfig config,
          Cluster& cluster);

  IterationStats outer_iteration();
  TrainResult train(const IterationObserver& observer = {});

  const DualState& dual() const { return dual_; }
  DualState release_dual() { return std::move(dual_); }
  const ModelVector& weights() const { return w_; }
  const TrainConfig& config() const { return config_; }
  const Cluster& cluster() const { return cluster_; }
  std::span<const TaskInstance> shard() const { return shard_; }
  int iterations_run() const { return iteration_; }
  const DirectionState& last_direction() const { return direction_; }

 private:
  SubproblemParams subproblem_params() const;
  std::uint64_t inner_seed() const;

  const Task& task_;
  std::span<const TaskInstance> shard_;
  TrainConfig config_;
  Cluster& cluster_;
  DualState dual_;
  ModelVector w_;
  DirectionSolver solver_;
  DirectionState direction_;
  int iteration_ = 0;
};

/// Instance k goes to shard k mod K.
std::vector<std::vector<TaskInstance>> partition_round_robin(std::span<const TaskInstance> data,
                                                             int workers);

struct InProcessRun {
  std::vector<TrainResult> results;  // by rank
  std::vector<DualState> duals;      // by rank
  std::vector<std::vector<TaskInstance>> shards;
};

using RankedObserver = std::function<void(int rank, const IterationStats&, const Trainer&)>;

/// Partitions `data`, runs config.workers worker threads over an in-process
/// cluster and joins them. The observer is called concurrently from workers.
InProcessRun train_in_process(const Task& task, std::span<const TaskInstance> data,
                              const TrainConfig& config, const RankedObserver& observer = {});

}  // namespace bqo

#endif  // BQO_DRIVER_HPP
