#include "bqo/driver.hpp"

#include "bqo/log.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

namespace bqo {
namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto timed(double& bucket, F&& body) {
  Stopwatch watch;
  if constexpr (std::is_void_v<decltype(body())>) {
    body();
    bucket += watch.seconds();
  } else {
    auto out = body();
    bucket += watch.seconds();
    return out;
  }
}

// Fields of the line-search collective.
enum LineSearchField : std::size_t {
  kAlphaAD, kDAD, kVD, kCap, kAdded,
  kEta, kEtaStar, kConverged,  // appended by the aggregator
};

}  // namespace

StepSize line_search(const LineSearchScalars& s, double cap) {
  const double curvature = s.dw_dw + s.d_a_d;
  if (curvature <= kLineSearchMinCurvature) return {0.0, 0.0, true};
  const double eta_star = -(s.w_dw + s.alpha_a_d - s.v_d) / curvature;
  assert(eta_star >= -1e-8 * std::max(1.0, std::abs(s.w_dw) + std::abs(s.v_d)));
  return {std::min(cap, std::max(0.0, eta_star)), eta_star, false};
}

double feasibility_cap(const DualState& dual, const DirectionState& direction) {
  double cap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dual.instances.size(); ++i) {
    const auto& entries = dual.instances[i].entries;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const double d = direction.d[i][j];
      if (d < 0.0) cap = std::min(cap, entries[j].alpha / -d);
    }
  }
  return cap;
}

std::size_t grow_working_set(DualState& dual, const ModelVector& w, const Task& task,
                             std::span<const TaskInstance> shard, double c, double tol) {
  std::size_t added = 0;
  for (auto& inst : dual.instances) {
    const TaskInstance& x = shard[inst.local_index];
    Inference found = task.loss_augmented_argmax(w, x);
    const double slack = inst.alpha_sum / (2.0 * c);
    if (found.violation > slack + tol && !inst.contains(found.structure)) {
      inst.entries.push_back(make_entry(task, x, std::move(found.structure)));
      ++added;
    }
  }
  return added;
}

Trainer::Trainer(const Task& task, std::span<const TaskInstance> shard, TrainConfig config,
                 Cluster& cluster)
    : task_(task), shard_(shard), config_(config), cluster_(cluster) {
  config_.validate();
  if (config_.workers != cluster.size()) {
    throw std::invalid_argument("config worker count does not match the cluster size");
  }
  if (task.hash_bits() != config_.hash_bits) {
    throw std::invalid_argument("task and config disagree on hash bits");
  }
  dual_ = make_dual_state(shard_);
  w_ = ModelVector::Zero(task.dimension());
  if (config_.saturate_working_set) saturate_working_set(dual_, task_, shard_);
}

SubproblemParams Trainer::subproblem_params() const {
  SubproblemParams p;
  p.c = config_.c;
  p.theta = config_.effective_theta();
  p.lambda = config_.lambda > 0.0
                 ? config_.lambda
                 : scaled_lambda(dual_, p.theta, config_.c, config_.lambda_scale);
  p.inner_epochs = config_.inner_epochs;
  p.stop_ratio = config_.inner_stop_ratio;
  return p;
}

std::uint64_t Trainer::inner_seed() const {
  std::seed_seq seq{static_cast<std::uint32_t>(config_.rng_seed),
                    static_cast<std::uint32_t>(config_.rng_seed >> 32),
                    static_cast<std::uint32_t>(cluster_.rank()),
                    static_cast<std::uint32_t>(iteration_)};
  std::uint32_t words[2];
  seq.generate(std::begin(words), std::end(words));
  return (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
}

IterationStats Trainer::outer_iteration() {
  Stopwatch wall;
  IterationStats stats;
  stats.outer_iter = iteration_;
  const double c = config_.c;

  // [inference] grow working sets with the synchronized w
  std::size_t added = 0;
  if (!config_.saturate_working_set && iteration_ % config_.inference_interval == 0) {
    added = timed(stats.time_inference_s, [&] {
      return grow_working_set(dual_, w_, task_, shard_, c, config_.ws_violation_tol);
    });
  }

  // [learning] local direction block
  timed(stats.time_learning_s,
        [&] { direction_ = solver_.solve(dual_, w_, subproblem_params(), inner_seed()); });

  // [comm] Δw = Σ_k u_k
  const ModelVector delta_w =
      timed(stats.time_comm_s, [&] { return cluster_.allreduce_sum(direction_.u); });

  LineSearchScalars scalars;
  std::vector<double> fields(kAdded + 1, 0.0);
  timed(stats.time_learning_s, [&] {
    scalars.w_dw = w_.dot(delta_w);
    scalars.dw_dw = delta_w.squaredNorm();
    for (std::size_t i = 0; i < dual_.instances.size(); ++i) {
      const InstanceState& inst = dual_.instances[i];
      const double t = direction_.t[i];
      fields[kAlphaAD] += inst.alpha_sum * t / (2.0 * c);
      fields[kDAD] += t * t / (2.0 * c);
      for (std::size_t j = 0; j < inst.entries.size(); ++j) {
        fields[kVD] += inst.entries[j].delta * direction_.d[i][j];
      }
    }
    fields[kCap] = feasibility_cap(dual_, direction_);
    fields[kAdded] = static_cast<double>(added);
  });

  // [comm] O(1) collective; η is computed once by the aggregator
  static constexpr ReduceOp kOps[] = {ReduceOp::sum, ReduceOp::sum, ReduceOp::sum, ReduceOp::min,
                                      ReduceOp::sum};
  const std::vector<double> reduced = timed(stats.time_comm_s, [&] {
    return cluster_.allreduce_scalars(fields, kOps, [&scalars](std::vector<double>& out) {
      LineSearchScalars global = scalars;
      global.alpha_a_d = out[kAlphaAD];
      global.d_a_d = out[kDAD];
      global.v_d = out[kVD];
      const StepSize step = line_search(global, out[kCap]);
      out.push_back(step.eta);
      out.push_back(step.eta_star);
      out.push_back(step.converged ? 1.0 : 0.0);
    });
  });
  const double eta = reduced.at(kEta);
  stats.eta = eta;
  stats.eta_star = reduced.at(kEtaStar);
  stats.ws_added = static_cast<std::size_t>(reduced[kAdded]);
  stats.converged = reduced.at(kConverged) != 0.0 && stats.ws_added == 0;

  // [learning] α ← α + ηd, w ← w + ηΔw, prune stale entries
  timed(stats.time_learning_s, [&] {
    if (eta > 0.0) {
      for (std::size_t i = 0; i < dual_.instances.size(); ++i) {
        InstanceState& inst = dual_.instances[i];
        for (std::size_t j = 0; j < inst.entries.size(); ++j) {
          WorkingSetEntry& e = inst.entries[j];
          const double updated = std::max(0.0, e.alpha + eta * direction_.d[i][j]);
          inst.alpha_sum += updated - e.alpha;
          e.alpha = updated;
        }
      }
      w_ += eta * delta_w;
    }
    if (config_.prune_after > 0 && !config_.saturate_working_set) {
      for (auto& inst : dual_.instances) {
        for (auto& e : inst.entries) e.zero_streak = e.alpha == 0.0 ? e.zero_streak + 1 : 0;
        std::erase_if(inst.entries,
                      [&](const WorkingSetEntry& e) { return e.zero_streak >= config_.prune_after; });
      }
    }
  });

  // [comm] objective from local partial sums
  std::vector<double> partial{local_dual_terms(dual_, c),
                              static_cast<double>(dual_.working_set_size())};
  if (config_.audit) partial.push_back(local_slack_terms(task_, shard_, w_, c));
  const std::vector<double> totals =
      timed(stats.time_comm_s, [&] { return cluster_.allreduce_sum_scalars(partial); });
  const double half_sq = 0.5 * w_.squaredNorm();
  stats.dual_obj = half_sq + totals[0];
  stats.ws_size = static_cast<std::size_t>(totals[1]);

  if (config_.audit) {
    stats.primal_obj = half_sq + totals[2];
    const ModelVector rebuilt = cluster_.allreduce_sum(local_weight_sum(dual_, w_.size()));
    stats.consistency_error = (rebuilt - w_).lpNorm<Eigen::Infinity>();
    if (alpha_sum_drift(dual_) > 1e-9) {
      log::warn("alpha-sum drift above 1e-9; reconciling");
      reconcile_alpha_sums(dual_);
    }
  }

  stats.wall_time_s = wall.seconds();
  ++iteration_;
  return stats;
}

TrainResult Trainer::train(const IterationObserver& observer) {
  TrainResult result;
  const double local_count = static_cast<double>(shard_.size());
  const double total = cluster_.allreduce_sum_scalars(std::span(&local_count, 1))[0];
  if (total == 0.0) {
    result.w = w_;
    return result;
  }

  double previous = 0.0;  // f(0)
  int stable = 0;
  for (int t = 0; t < config_.outer_iters; ++t) {
    IterationStats stats = outer_iteration();
    if (observer) observer(stats, *this);
    result.stats.push_back(stats);
    log::debug("iter " + std::to_string(stats.outer_iter) + " f=" + std::to_string(stats.dual_obj) +
               " eta=" + std::to_string(stats.eta) + " added=" + std::to_string(stats.ws_added));
    if (stats.converged) break;

    const double change =
        std::abs(stats.dual_obj - previous) / std::max(std::abs(stats.dual_obj), 1e-300);
    stable = change < config_.converge_rel_tol && stats.ws_added == 0 ? stable + 1 : 0;
    previous = stats.dual_obj;
    if (stable >= config_.converge_patience) break;
  }
  result.w = w_;
  return result;
}

std::vector<std::vector<TaskInstance>> partition_round_robin(std::span<const TaskInstance> data,
                                                             int workers) {
  if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
  std::vector<std::vector<TaskInstance>> shards(static_cast<std::size_t>(workers));
  for (std::size_t k = 0; k < data.size(); ++k) {
    shards[k % static_cast<std::size_t>(workers)].push_back(data[k]);
  }
  return shards;
}

InProcessRun train_in_process(const Task& task, std::span<const TaskInstance> data,
                              const TrainConfig& config, const RankedObserver& observer) {
  const int k = config.workers;
  InProcessRun run;
  run.shards = partition_round_robin(data, k);
  run.results.resize(static_cast<std::size_t>(k));
  run.duals.resize(static_cast<std::size_t>(k));
  auto group = InProcessGroup::create(k);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));

  auto work = [&](int rank) {
    const auto r = static_cast<std::size_t>(rank);
    try {
      auto cluster = group->handle(rank);
      Trainer trainer(task, run.shards[r], config, *cluster);
      IterationObserver forward;
      if (observer) {
        forward = [&, rank](const IterationStats& s, const Trainer& tr) { observer(rank, s, tr); };
      }
      run.results[r] = trainer.train(forward);
      run.duals[r] = trainer.release_dual();
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };

  std::vector<std::thread> threads;
  for (int rank = 1; rank < k; ++rank) threads.emplace_back(work, rank);
  work(0);
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return run;
}

}  // namespace bqo
