#include "bqo/baselines.hpp"

#include "bqo/comm.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <thread>

using namespace bqo;
using namespace bqo::testing;

namespace {

template <typename F>
std::vector<ModelVector> on_group(int size, std::span<const std::vector<TaskInstance>> shards, F body) {
  auto group = InProcessGroup::create(size);
  std::vector<ModelVector> out(static_cast<std::size_t>(size));
  std::vector<std::thread> threads;
  for (int r = 0; r < size; ++r) {
    threads.emplace_back([&, r] {
      auto c = group->handle(r);
      out[static_cast<std::size_t>(r)] = body(shards[static_cast<std::size_t>(r)], *c);
    });
  }
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace

TEST_CASE("a perceptron pass adds feature differences on mistakes") {
  Rng rng(113);
  ChainTask task(3, 12);
  const auto data = random_chain(task, 20, 5, 6, rng);
  ModelVector expected = ModelVector::Zero(task.dimension());
  std::size_t mistakes = 0;
  for (const auto& x : data) {
    const StructureKey y = task.predict(expected, x);
    if (y == x.gold) continue;
    ++mistakes;
    task.phi_diff(x, y).add_to(expected, 1.0);
  }
  const PassResult pass = perceptron_local_pass(ModelVector::Zero(task.dimension()), data, task);
  CHECK(pass.mistakes == mistakes);
  CHECK(pass.w == expected);
}

TEST_CASE("averaged pass returns the mean of the per-example iterates") {
  Rng rng(127);
  MulticlassTask task(4, 12);
  const auto data = random_multiclass(task, 25, 6, rng);
  ModelVector w = ModelVector::Zero(task.dimension());
  ModelVector sum = ModelVector::Zero(task.dimension());
  for (const auto& x : data) {
    const StructureKey y = task.predict(w, x);
    if (y != x.gold) task.phi_diff(x, y).add_to(w, 1.0);
    sum += w;
  }
  const PassResult pass =
      perceptron_local_pass(ModelVector::Zero(task.dimension()), data, task, true);
  CHECK((pass.w - sum / static_cast<double>(data.size())).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("parameter mixing is a convex combination") {
  const std::vector<ModelVector> models{ModelVector::Constant(3, 1.0), ModelVector::Constant(3, 4.0)};
  const std::vector<double> weights{0.75, 0.25};
  CHECK(mix_parameters(models, weights) == ModelVector::Constant(3, 1.75));
  const std::vector<double> bad{0.5, 0.6};
  CHECK_THROWS_AS(mix_parameters(models, bad), std::invalid_argument);
}

TEST_CASE("distributed perceptron mixes local passes every round") {
  Rng rng(131);
  ChainTask task(3, 12);
  const auto data = random_chain(task, 30, 5, 6, rng);
  const std::vector<std::vector<TaskInstance>> shards{{data.begin(), data.begin() + 10},
                                                      {data.begin() + 10, data.end()}};
  for (MixingWeights mixing : {MixingWeights::uniform, MixingWeights::by_shard_size}) {
    PerceptronConfig cfg;
    cfg.rounds = 3;
    cfg.mixing = mixing;
    const double w0 = mixing == MixingWeights::uniform ? 0.5 : 10.0 / 30.0;
    const double w1 = mixing == MixingWeights::uniform ? 0.5 : 20.0 / 30.0;
    ModelVector expected = ModelVector::Zero(task.dimension());
    for (int round = 0; round < cfg.rounds; ++round) {
      const ModelVector a = perceptron_local_pass(expected, shards[0], task).w;
      const ModelVector b = perceptron_local_pass(expected, shards[1], task).w;
      expected = ModelVector::Zero(task.dimension());
      expected += w0 * a;
      expected += w1 * b;
    }
    const auto got = on_group(2, shards, [&](std::span<const TaskInstance> shard, Cluster& c) {
      return train_distributed_perceptron(shard, task, c, cfg);
    });
    CHECK(got[0] == got[1]);
    CHECK((got[0] - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("simple averaging equals the mean of independently trained models") {
  Rng rng(137);
  MulticlassTask task(3, 12);
  const auto data = random_multiclass(task, 30, 6, rng);
  const std::vector<std::vector<TaskInstance>> shards{{data.begin(), data.begin() + 15},
                                                      {data.begin() + 15, data.end()}};
  TrainConfig cfg;
  cfg.hash_bits = 12;
  cfg.workers = 2;
  cfg.outer_iters = 10;
  TrainConfig solo = cfg;
  solo.workers = 1;
  ModelVector expected = ModelVector::Zero(task.dimension());
  for (const auto& shard : shards) {
    auto local = make_local_cluster();
    expected += 0.5 * Trainer(task, shard, solo, *local).train().w;
  }
  const auto got = on_group(2, shards, [&](std::span<const TaskInstance> shard, Cluster& c) {
    return train_simple_average(shard, task, c, cfg);
  });
  CHECK(got[0] == got[1]);
  CHECK((got[0] - expected).lpNorm<Eigen::Infinity>() < 1e-12);
}
