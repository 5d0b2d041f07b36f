#ifndef BQO_TASK_HPP
#define BQO_TASK_HPP

#include "bqo/sparse_vector.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bqo {

/// Label ids; one per token (multiclass structures have length 1).
using StructureKey = std::vector<int>;

/// Raised for infeasible structures and length mismatches.
class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Observation before feature hashing: one named-feature bag per token.
struct RawInstance {
  struct Feature {
    std::string name;
    double value = 1.0;
  };
  std::int64_t id = 0;
  std::vector<std::vector<Feature>> tokens;
  StructureKey gold;
};

/// Hashed observation. `slots[f * num_labels + label]` is the weight index of
/// token feature f conjoined with `label`.
struct TokenFeatures {
  std::vector<double> values;
  std::vector<Index> slots;
};

struct TaskInstance {
  std::int64_t id = 0;
  std::vector<TokenFeatures> tokens;
  StructureKey gold;

  std::size_t length() const { return tokens.size(); }
};

/// Result of loss-augmented inference: the most violated structure and
/// Δ(gold, ŷ) − wᵀφ(ŷ).
struct Inference {
  StructureKey structure;
  double violation = 0.0;
};

/// Structured prediction task contract. Implementations are immutable after
/// construction and safe to share between workers.
class Task {
 public:
  Task(int num_labels, int hash_bits);
  virtual ~Task() = default;

  int num_labels() const { return num_labels_; }
  int hash_bits() const { return hash_bits_; }
  Eigen::Index dimension() const { return Eigen::Index{1} << hash_bits_; }

  /// Hashes the raw feature bags against every label.
  TaskInstance compile(const RawInstance& raw) const;

  virtual SparseVec joint_features(const TaskInstance& x, const StructureKey& y) const = 0;
  virtual double loss(const StructureKey& gold, const StructureKey& y) const = 0;
  virtual Inference loss_augmented_argmax(const ModelVector& w, const TaskInstance& x) const = 0;
  virtual StructureKey predict(const ModelVector& w, const TaskInstance& x) const = 0;

  /// All feasible structures in lexicographic order. Refuses above `limit`.
  std::vector<StructureKey> enumerate_structures(const TaskInstance& x,
                                                 std::size_t limit = 100000) const;

  /// Φ(x, gold) − Φ(x, y).
  SparseVec phi_diff(const TaskInstance& x, const StructureKey& y) const;

  /// wᵀΦ(x, y) via the sparse joint feature vector.
  double score(const ModelVector& w, const TaskInstance& x, const StructureKey& y) const;

  virtual void check_feasible(const TaskInstance& x, const StructureKey& y) const;

 protected:
  double emission(const ModelVector& w, const TokenFeatures& token, int label) const;
  void append_emissions(const TaskInstance& x, const StructureKey& y,
                        std::vector<SparseVec::Entry>& out) const;

 private:
  int num_labels_;
  int hash_bits_;
};

/// One label per instance, 0/1 loss, linear-scan inference.
class MulticlassTask final : public Task {
 public:
  using Task::Task;

  SparseVec joint_features(const TaskInstance& x, const StructureKey& y) const override;
  double loss(const StructureKey& gold, const StructureKey& y) const override;
  Inference loss_augmented_argmax(const ModelVector& w, const TaskInstance& x) const override;
  StructureKey predict(const ModelVector& w, const TaskInstance& x) const override;
  void check_feasible(const TaskInstance& x, const StructureKey& y) const override;

 private:
  int best_label(const ModelVector& w, const TaskInstance& x, bool augmented) const;
};

/// First-order linear chain with Hamming loss and Viterbi inference.
class ChainTask final : public Task {
 public:
  ChainTask(int num_labels, int hash_bits);

  SparseVec joint_features(const TaskInstance& x, const StructureKey& y) const override;
  double loss(const StructureKey& gold, const StructureKey& y) const override;
  Inference loss_augmented_argmax(const ModelVector& w, const TaskInstance& x) const override;
  StructureKey predict(const ModelVector& w, const TaskInstance& x) const override;

  Index transition_slot(int from, int to) const {
    return transition_slots_[static_cast<std::size_t>(from * num_labels() + to)];
  }

  /// Sum of decomposed node and edge scores along y, with the per-position
  /// Hamming term when `augmented`. This is the quantity Viterbi maximizes.
  double path_score(const ModelVector& w, const TaskInstance& x, const StructureKey& y,
                    bool augmented) const;

 private:
  StructureKey viterbi(const ModelVector& w, const TaskInstance& x, bool augmented) const;

  std::vector<Index> transition_slots_;
};

enum class TaskKind { multiclass, chain };

std::unique_ptr<Task> make_task(TaskKind kind, int num_labels, int hash_bits);

}  // namespace bqo

#endif  // BQO_TASK_HPP
