#include "bqo/baselines.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bqo {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct TimedPass {
  ModelVector raw;
  ModelVector averaged;
  std::size_t mistakes = 0;
  double inference_s = 0.0;
  double learning_s = 0.0;
};

// Averaging uses the lazy form: mean of the n iterates equals
// w_final − Σ_k (k−1)·u_k / n for an update u_k made at example k.
TimedPass run_pass(const ModelVector& w, std::span<const TaskInstance> shard, const Task& task,
                   bool averaged) {
  TimedPass out;
  out.raw = w;
  ModelVector lag;
  if (averaged) lag = ModelVector::Zero(w.size());
  for (std::size_t k = 0; k < shard.size(); ++k) {
    const TaskInstance& x = shard[k];
    auto start = std::chrono::steady_clock::now();
    const StructureKey predicted = task.predict(out.raw, x);
    out.inference_s += seconds_since(start);
    if (predicted == x.gold) continue;
    start = std::chrono::steady_clock::now();
    ++out.mistakes;
    const SparseVec update = task.phi_diff(x, predicted);
    update.add_to(out.raw, 1.0);
    if (averaged) update.add_to(lag, static_cast<double>(k));
    out.learning_s += seconds_since(start);
  }
  if (averaged && !shard.empty()) {
    out.averaged = out.raw - lag / static_cast<double>(shard.size());
  } else {
    out.averaged = out.raw;
  }
  return out;
}

}  // namespace

PassResult perceptron_local_pass(const ModelVector& w, std::span<const TaskInstance> shard,
                                 const Task& task, bool averaged) {
  TimedPass pass = run_pass(w, shard, task, averaged);
  return {averaged ? std::move(pass.averaged) : std::move(pass.raw), pass.mistakes};
}

ModelVector mix_parameters(std::span<const ModelVector> models, std::span<const double> weights) {
  if (models.size() != weights.size() || models.empty()) {
    throw std::invalid_argument("mix_parameters: need one weight per model");
  }
  double total = 0.0;
  for (double v : weights) total += v;
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixing weights must sum to 1");
  ModelVector out = ModelVector::Zero(models.front().size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (models[k].size() != out.size()) throw std::invalid_argument("mix_parameters: length mismatch");
    out += weights[k] * models[k];
  }
  return out;
}

ModelVector train_distributed_perceptron(std::span<const TaskInstance> shard, const Task& task,
                                         Cluster& cluster, const PerceptronConfig& config,
                                         const RoundObserver& observer) {
  if (config.epochs_per_round < 1) throw std::invalid_argument("epochs per round must be >= 1");
  if (config.rounds < 0) throw std::invalid_argument("rounds must be non-negative");

  double weight = 1.0 / cluster.size();
  if (config.mixing == MixingWeights::by_shard_size) {
    const double local = static_cast<double>(shard.size());
    const double total = cluster.allreduce_sum_scalars(std::span(&local, 1))[0];
    weight = total > 0.0 ? local / total : 1.0 / cluster.size();
  }

  ModelVector w = ModelVector::Zero(task.dimension());
  for (int round = 0; round < config.rounds; ++round) {
    const auto round_start = std::chrono::steady_clock::now();
    RoundStats stats;
    stats.round = round;
    ModelVector local = w;
    ModelVector contribution;
    std::size_t mistakes = 0;
    for (int epoch = 0; epoch < config.epochs_per_round; ++epoch) {
      TimedPass pass = run_pass(local, shard, task, config.averaged);
      mistakes += pass.mistakes;
      stats.time_inference_s += pass.inference_s;
      stats.time_learning_s += pass.learning_s;
      local = std::move(pass.raw);
      contribution = std::move(pass.averaged);
    }

    auto comm_start = std::chrono::steady_clock::now();
    w = cluster.allreduce_sum(weight * contribution);
    const double local_mistakes = static_cast<double>(mistakes);
    stats.mistakes = static_cast<std::size_t>(
        cluster.allreduce_sum_scalars(std::span(&local_mistakes, 1))[0]);
    stats.time_comm_s = seconds_since(comm_start);
    stats.wall_time_s = seconds_since(round_start);
    if (observer) observer(stats, w);
  }
  return w;
}

ModelVector train_simple_average(std::span<const TaskInstance> shard, const Task& task,
                                 Cluster& cluster, const TrainConfig& config,
                                 const IterationObserver& local_observer) {
  TrainConfig local_config = config;
  local_config.workers = 1;
  auto local = make_local_cluster();
  Trainer trainer(task, shard, local_config, *local);
  const TrainResult result = trainer.train(local_observer);
  return cluster.allreduce_sum(result.w * (1.0 / cluster.size()));
}

}  // namespace bqo
