#include "bqo/task.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace bqo;
using namespace bqo::testing;

TEST_CASE("multiclass argmax matches enumeration, ties to the smallest label") {
  MulticlassTask task(4, 10);
  Rng rng(3);
  const auto data = random_multiclass(task, 40, 6, rng);
  for (const auto& x : data) {
    const ModelVector w = random_weights(task.dimension(), 1.0, rng);
    const Inference fast = task.loss_augmented_argmax(w, x);
    const Inference slow = brute_force_argmax(task, w, x);
    CHECK(fast.structure == slow.structure);
    CHECK(fast.violation == doctest::Approx(slow.violation).epsilon(1e-12));
  }
  // w = 0: every wrong label scores 1, the first one wins
  RawInstance raw;
  raw.tokens = {{{"f", 1.0}}};
  raw.gold = {0};
  const TaskInstance x = task.compile(raw);
  const Inference zero = task.loss_augmented_argmax(ModelVector::Zero(task.dimension()), x);
  CHECK(zero.structure == StructureKey{1});
  CHECK(zero.violation == 1.0);
  CHECK(task.predict(ModelVector::Zero(task.dimension()), x) == StructureKey{0});
}

TEST_CASE("chain Viterbi matches enumeration in structure and score") {
  Rng rng(17);
  for (int labels = 1; labels <= 4; ++labels) {
    ChainTask task(labels, 12);
    const auto data = random_chain(task, 60, 6, 8, rng);
    for (const auto& x : data) {
      const ModelVector w = random_weights(task.dimension(), 1.0, rng);
      const Inference fast = task.loss_augmented_argmax(w, x);
      const Inference slow = brute_force_argmax(task, w, x);
      CHECK(fast.structure == slow.structure);
      CHECK(fast.violation == doctest::Approx(slow.violation).epsilon(1e-9));
      CHECK(fast.violation >= 0.0);

      // plain decoding against enumeration of wᵀΦ
      StructureKey best;
      double best_score = -1e300;
      for (const auto& y : task.enumerate_structures(x)) {
        const double s = task.score(w, x, y);
        if (s > best_score) {
          best_score = s;
          best = y;
        }
      }
      CHECK(task.predict(w, x) == best);
    }
  }
}

TEST_CASE("decomposed path score equals the score recomputed from features") {
  Rng rng(23);
  ChainTask task(3, 12);
  const auto data = random_chain(task, 30, 5, 6, rng);
  for (const auto& x : data) {
    const ModelVector w = random_weights(task.dimension(), 1.0, rng);
    for (const auto& y : task.enumerate_structures(x)) {
      const double direct = task.joint_features(x, y).dot(w) + task.loss(x.gold, y);
      CHECK(std::abs(task.path_score(w, x, y, true) - direct) <= 1e-9);
      CHECK(std::abs(task.path_score(w, x, y, false) - task.score(w, x, y)) <= 1e-9);
    }
  }
}

TEST_CASE("gold structure has zero feature difference and zero loss") {
  Rng rng(29);
  ChainTask chain(4, 12);
  MulticlassTask multi(4, 12);
  for (const auto& x : random_chain(chain, 20, 6, 8, rng)) {
    CHECK(chain.phi_diff(x, x.gold).empty());
    CHECK(chain.loss(x.gold, x.gold) == 0.0);
  }
  for (const auto& x : random_multiclass(multi, 20, 6, rng)) {
    CHECK(multi.phi_diff(x, x.gold).empty());
    CHECK(multi.loss(x.gold, x.gold) == 0.0);
  }
}

TEST_CASE("Hamming loss counts positions") {
  ChainTask task(3, 10);
  CHECK(task.loss({0, 1, 2}, {0, 2, 2}) == 1.0);
  CHECK(task.loss({0, 1, 2}, {1, 2, 0}) == 3.0);
  CHECK_THROWS_AS(task.loss({0, 1}, {0}), StructureError);
}

TEST_CASE("infeasible structures and oversized enumerations are refused") {
  ChainTask task(4, 10);
  Rng rng(31);
  const TaskInstance x = random_chain(task, 1, 3, 4, rng).front();
  CHECK_THROWS_AS(task.check_feasible(x, StructureKey(x.length() + 1, 0)), StructureError);
  CHECK_THROWS_AS(task.check_feasible(x, StructureKey(x.length(), 4)), StructureError);
  CHECK(task.enumerate_structures(x).size() == static_cast<std::size_t>(std::pow(4, x.length())));
  RawInstance long_raw;
  long_raw.tokens.assign(10, {{"w", 1.0}});
  long_raw.gold.assign(10, 0);
  CHECK_THROWS_AS(task.enumerate_structures(task.compile(long_raw)), std::length_error);
}

TEST_CASE("transition slots come from the trans namespace") {
  ChainTask task(3, 16);
  RawInstance raw;
  raw.tokens = {{{"w", 1.0}}, {{"w", 1.0}}};
  raw.gold = {0, 2};
  const TaskInstance x = task.compile(raw);
  const ModelVector w = ModelVector::Zero(task.dimension());
  ModelVector bump = w;
  bump(task.transition_slot(0, 2)) += 1.0;
  CHECK(task.score(bump, x, {0, 2}) - task.score(w, x, {0, 2}) >= 1.0);
}
