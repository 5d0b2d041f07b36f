#ifndef BQO_BASELINES_HPP
#define BQO_BASELINES_HPP

#include "bqo/comm.hpp"
#include "bqo/config.hpp"
#include "bqo/driver.hpp"
#include "bqo/task.hpp"

#include <functional>
#include <span>
#include <vector>

namespace bqo {

enum class MixingWeights { uniform, by_shard_size };

struct PerceptronConfig {
  int epochs_per_round = 1;
  int rounds = 10;
  MixingWeights mixing = MixingWeights::uniform;
  bool averaged = false;  // average the iterates within each local pass
};

struct PassResult {
  ModelVector w;
  std::size_t mistakes = 0;
};

/// One structured-perceptron pass in shard order: on a mistake,
/// w += Φ(x, gold) − Φ(x, ŷ).
PassResult perceptron_local_pass(const ModelVector& w, std::span<const TaskInstance> shard,
                                 const Task& task, bool averaged = false);

/// Σ_k weights[k] · models[k]; weights must sum to 1.
ModelVector mix_parameters(std::span<const ModelVector> models, std::span<const double> weights);

struct RoundStats {
  int round = 0;
  std::size_t mistakes = 0;  // summed over workers
  double time_inference_s = 0.0;
  double time_learning_s = 0.0;
  double time_comm_s = 0.0;
  double wall_time_s = 0.0;
};

using RoundObserver = std::function<void(const RoundStats&, const ModelVector&)>;

/// Iterative parameter mixing: local passes, then a weighted average through
/// one vector allreduce per round.
ModelVector train_distributed_perceptron(std::span<const TaskInstance> shard, const Task& task,
                                         Cluster& cluster, const PerceptronConfig& config,
                                         const RoundObserver& observer = {});

/// Each worker trains on its own shard with a single-worker cluster; the
/// local models are averaged once at the end.
ModelVector train_simple_average(std::span<const TaskInstance> shard, const Task& task,
                                 Cluster& cluster, const TrainConfig& config,
                                 const IterationObserver& local_observer = {});

}  // namespace bqo

#endif  // BQO_BASELINES_HPP
