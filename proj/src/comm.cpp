#include "bqo/comm.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <optional>

namespace bqo {

std::vector<double> Cluster::allreduce_sum_scalars(std::span<const double> values) {
  std::vector<ReduceOp> ops(values.size(), ReduceOp::sum);
  return allreduce_scalars(values, ops);
}

namespace reduce {

VectorSum::VectorSum(Eigen::Index dimension) : sum_(ModelVector::Zero(dimension)) {}

void VectorSum::add_dense(const ModelVector& values) {
  if (values.size() != sum_.size()) throw CollectiveError("allreduce: vector length mismatch");
  sum_ += values;
}

void VectorSum::add_sparse(std::span<const std::uint32_t> indices, std::span<const double> values) {
  if (indices.size() != values.size()) throw CollectiveError("allreduce: malformed sparse payload");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= sum_.size()) throw CollectiveError("allreduce: sparse index out of range");
    sum_(indices[k]) += values[k];
  }
}

ModelVector sum_in_rank_order(std::span<const ModelVector* const> contributions) {
  if (contributions.empty()) return {};
  VectorSum acc(contributions.front()->size());
  for (const ModelVector* v : contributions) acc.add_dense(*v);
  return std::move(acc.result());
}

void check_scalar_request(std::span<const double> values, std::span<const ReduceOp> ops) {
  if (values.size() > kMaxScalars) throw std::invalid_argument("scalar allreduce: too many fields");
  if (values.size() != ops.size()) throw std::invalid_argument("scalar allreduce: ops/values size");
}

std::vector<double> scalars_in_rank_order(std::span<const std::vector<double>* const> contributions,
                                          std::span<const ReduceOp> ops) {
  std::vector<double> out(ops.size(), 0.0);
  bool first = true;
  for (const std::vector<double>* c : contributions) {
    if (c->size() != ops.size()) throw CollectiveError("scalar allreduce: length mismatch");
    for (std::size_t k = 0; k < ops.size(); ++k) {
      const double v = (*c)[k];
      if (first) {
        out[k] = v;
        continue;
      }
      switch (ops[k]) {
        case ReduceOp::sum: out[k] += v; break;
        case ReduceOp::min: out[k] = std::min(out[k], v); break;
        case ReduceOp::max: out[k] = std::max(out[k], v); break;
      }
    }
    first = false;
  }
  return out;
}

}  // namespace reduce

namespace {

enum class CollectiveKind { vector_sum, scalars, barrier };

const char* kind_name(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::vector_sum: return "vector allreduce";
    case CollectiveKind::scalars: return "scalar allreduce";
    case CollectiveKind::barrier: return "barrier";
  }
  return "?";
}

struct Contribution {
  CollectiveKind kind = CollectiveKind::barrier;
  const ModelVector* vector = nullptr;
  std::vector<double> scalars;
  std::vector<ReduceOp> ops;
  const ScalarFinalizer* finalize = nullptr;
};

struct Outcome {
  ModelVector vector;
  std::vector<double> scalars;
};

class Rendezvous final : public InProcessGroup,
                         public std::enable_shared_from_this<Rendezvous> {
 public:
  Rendezvous(int size, std::chrono::milliseconds timeout)
      : size_(size), timeout_(timeout), slots_(static_cast<std::size_t>(size)) {}

  std::unique_ptr<Cluster> handle(int rank) override;

  std::shared_ptr<const Outcome> exchange(int rank, Contribution contribution) {
    std::unique_lock lock(mutex_);
    if (failure_) throw CollectiveError(*failure_);
    slots_[static_cast<std::size_t>(rank)] = std::move(contribution);
    const std::uint64_t generation = generation_;
    if (++arrived_ == size_) {
      try {
        outcome_ = std::make_shared<const Outcome>(aggregate());
      } catch (const std::exception& e) {
        fail(e.what());
        throw CollectiveError(*failure_);
      }
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return outcome_;
    }
    const bool done = cv_.wait_for(lock, timeout_, [&] {
      return generation_ != generation || failure_.has_value();
    });
    if (generation_ != generation) return outcome_;
    if (!done) fail("collective timed out waiting for " + std::to_string(size_ - arrived_) + " worker(s)");
    throw CollectiveError(*failure_);
  }

  int size() const { return size_; }

 private:
  Outcome aggregate() {
    const CollectiveKind kind = slots_[0].kind;
    for (const auto& s : slots_) {
      if (s.kind != kind) {
        throw CollectiveError(std::string("mismatched collectives: ") + kind_name(kind) + " vs " +
                              kind_name(s.kind));
      }
    }
    Outcome out;
    if (kind == CollectiveKind::vector_sum) {
      std::vector<const ModelVector*> parts;
      for (const auto& s : slots_) parts.push_back(s.vector);
      out.vector = reduce::sum_in_rank_order(parts);
    } else if (kind == CollectiveKind::scalars) {
      std::vector<const std::vector<double>*> parts;
      for (const auto& s : slots_) parts.push_back(&s.scalars);
      out.scalars = reduce::scalars_in_rank_order(parts, slots_[0].ops);
      if (slots_[0].finalize && *slots_[0].finalize) (*slots_[0].finalize)(out.scalars);
    }
    return out;
  }

  void fail(const std::string& why) {
    if (!failure_) failure_ = why;
    cv_.notify_all();
  }

  int size_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Contribution> slots_;
  int arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::shared_ptr<const Outcome> outcome_;
  std::optional<std::string> failure_;
};

class InProcessCluster final : public Cluster {
 public:
  InProcessCluster(std::shared_ptr<Rendezvous> group, int rank)
      : group_(std::move(group)), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return group_->size(); }

  ModelVector allreduce_sum(const ModelVector& values) override {
    Contribution c;
    c.kind = CollectiveKind::vector_sum;
    c.vector = &values;
    return run(std::move(c))->vector;
  }

  std::vector<double> allreduce_scalars(std::span<const double> values,
                                        std::span<const ReduceOp> ops,
                                        const ScalarFinalizer& finalize) override {
    reduce::check_scalar_request(values, ops);
    Contribution c;
    c.kind = CollectiveKind::scalars;
    c.scalars.assign(values.begin(), values.end());
    c.ops.assign(ops.begin(), ops.end());
    c.finalize = &finalize;
    return run(std::move(c))->scalars;
  }

  void barrier() override {
    Contribution c;
    c.kind = CollectiveKind::barrier;
    run(std::move(c));
  }

 private:
  std::shared_ptr<const Outcome> run(Contribution c) {
    if (busy_.exchange(true)) {
      throw std::logic_error("a collective is already outstanding on this cluster handle");
    }
    struct Release {
      std::atomic<bool>& flag;
      ~Release() { flag = false; }
    } release{busy_};
    return group_->exchange(rank_, std::move(c));
  }

  std::shared_ptr<Rendezvous> group_;
  int rank_;
  std::atomic<bool> busy_{false};
};

std::unique_ptr<Cluster> Rendezvous::handle(int rank) {
  if (rank < 0 || rank >= size_) throw std::out_of_range("rank outside the cluster");
  return std::make_unique<InProcessCluster>(shared_from_this(), rank);
}

}  // namespace

std::shared_ptr<InProcessGroup> InProcessGroup::create(int size, std::chrono::milliseconds timeout) {
  if (size < 1) throw std::invalid_argument("cluster size must be at least 1");
  return std::make_shared<Rendezvous>(size, timeout);
}

std::unique_ptr<Cluster> make_local_cluster() { return InProcessGroup::create(1)->handle(0); }

}  // namespace bqo
