#ifndef BQO_COMM_HPP
#define BQO_COMM_HPP

#include "bqo/sparse_vector.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bqo {

/// A collective failed (timeout, disconnect, mismatched call). Every
/// participant of the failed collective observes this error.
class CollectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ReduceOp : std::uint8_t { sum, min, max };

inline constexpr std::size_t kMaxScalars = 8;
inline constexpr std::chrono::milliseconds kDefaultCollectiveTimeout{120000};

/// Runs on the aggregating rank only, after reduction and before the reply is
/// broadcast. May resize the array up to kMaxScalars.
using ScalarFinalizer = std::function<void(std::vector<double>&)>;

/// One worker's view of a K-worker cluster. Collectives block until all
/// workers have called the same collective.
class Cluster {
 public:
  virtual ~Cluster() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;

  /// Elementwise sum, accumulated in rank order 0..K−1 on every transport.
  virtual ModelVector allreduce_sum(const ModelVector& values) = 0;

  /// Per-field reduction of up to kMaxScalars values.
  virtual std::vector<double> allreduce_scalars(std::span<const double> values,
                                                std::span<const ReduceOp> ops,
                                                const ScalarFinalizer& finalize = {}) = 0;

  virtual void barrier() = 0;

  std::vector<double> allreduce_sum_scalars(std::span<const double> values);
};

namespace reduce {

/// Accumulates dense or sparse contributions in the order they are added.
/// Both transports feed it in rank order, so their results are bit-identical.
class VectorSum {
 public:
  explicit VectorSum(Eigen::Index dimension);

  void add_dense(const ModelVector& values);
  void add_sparse(std::span<const std::uint32_t> indices, std::span<const double> values);

  Eigen::Index dimension() const { return sum_.size(); }
  ModelVector& result() { return sum_; }

 private:
  ModelVector sum_;
};

ModelVector sum_in_rank_order(std::span<const ModelVector* const> contributions);

std::vector<double> scalars_in_rank_order(std::span<const std::vector<double>* const> contributions,
                                          std::span<const ReduceOp> ops);

void check_scalar_request(std::span<const double> values, std::span<const ReduceOp> ops);

}  // namespace reduce

/// Shared rendezvous for K worker threads in one process.
class InProcessGroup {
 public:
  static std::shared_ptr<InProcessGroup> create(
      int size, std::chrono::milliseconds timeout = kDefaultCollectiveTimeout);

  /// Handle for `rank`; each handle must be used by one thread at a time.
  virtual std::unique_ptr<Cluster> handle(int rank) = 0;
  virtual ~InProcessGroup() = default;
};

/// Single-worker cluster where every collective is local.
std::unique_ptr<Cluster> make_local_cluster();

}  // namespace bqo

#endif  // BQO_COMM_HPP
