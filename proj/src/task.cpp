#include "bqo/task.hpp"

#include "bqo/hashing.hpp"

#include <algorithm>
#include <limits>

namespace bqo {

Task::Task(int num_labels, int hash_bits) : num_labels_(num_labels), hash_bits_(hash_bits) {
  if (num_labels < 1) throw std::invalid_argument("task needs at least one label");
  if (hash_bits < kMinHashBits || hash_bits > kMaxHashBits) {
    throw std::out_of_range("hash bits must lie in [1, 30]");
  }
}

TaskInstance Task::compile(const RawInstance& raw) const {
  TaskInstance out;
  out.id = raw.id;
  out.gold = raw.gold;
  out.tokens.reserve(raw.tokens.size());
  std::vector<std::string> label_names(static_cast<std::size_t>(num_labels_));
  for (int l = 0; l < num_labels_; ++l) label_names[static_cast<std::size_t>(l)] = std::to_string(l);

  for (const auto& bag : raw.tokens) {
    TokenFeatures token;
    token.values.reserve(bag.size());
    token.slots.reserve(bag.size() * static_cast<std::size_t>(num_labels_));
    for (const auto& feature : bag) {
      token.values.push_back(feature.value);
      for (const auto& label : label_names) {
        token.slots.push_back(hash_feature({"emit", conjoin(label, feature.name)}, hash_bits_));
      }
    }
    out.tokens.push_back(std::move(token));
  }
  return out;
}

void Task::check_feasible(const TaskInstance& x, const StructureKey& y) const {
  if (y.size() != x.length()) throw StructureError("structure length does not match input");
  for (int label : y) {
    if (label < 0 || label >= num_labels_) throw StructureError("label id out of range");
  }
}

double Task::emission(const ModelVector& w, const TokenFeatures& token, int label) const {
  double acc = 0.0;
  const auto stride = static_cast<std::size_t>(num_labels_);
  for (std::size_t f = 0; f < token.values.size(); ++f) {
    acc += token.values[f] * w(token.slots[f * stride + static_cast<std::size_t>(label)]);
  }
  return acc;
}

void Task::append_emissions(const TaskInstance& x, const StructureKey& y,
                            std::vector<SparseVec::Entry>& out) const {
  const auto stride = static_cast<std::size_t>(num_labels_);
  for (std::size_t t = 0; t < x.tokens.size(); ++t) {
    const TokenFeatures& token = x.tokens[t];
    const auto label = static_cast<std::size_t>(y[t]);
    for (std::size_t f = 0; f < token.values.size(); ++f) {
      out.push_back({token.slots[f * stride + label], token.values[f]});
    }
  }
}

std::vector<StructureKey> Task::enumerate_structures(const TaskInstance& x,
                                                     std::size_t limit) const {
  const std::size_t length = x.length();
  std::size_t count = 1;
  for (std::size_t t = 0; t < length; ++t) {
    if (count > limit / static_cast<std::size_t>(num_labels_)) {
      throw std::length_error("structure space exceeds the enumeration limit");
    }
    count *= static_cast<std::size_t>(num_labels_);
  }
  if (count > limit) throw std::length_error("structure space exceeds the enumeration limit");

  std::vector<StructureKey> out;
  out.reserve(count);
  StructureKey y(length, 0);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(y);
    // odometer increment, last position fastest
    for (std::size_t t = length; t-- > 0;) {
      if (++y[t] < num_labels_) break;
      y[t] = 0;
    }
  }
  return out;
}

SparseVec Task::phi_diff(const TaskInstance& x, const StructureKey& y) const {
  return joint_features(x, x.gold) - joint_features(x, y);
}

double Task::score(const ModelVector& w, const TaskInstance& x, const StructureKey& y) const {
  return joint_features(x, y).dot(w);
}

// --- multiclass -------------------------------------------------------------

void MulticlassTask::check_feasible(const TaskInstance& x, const StructureKey& y) const {
  if (x.length() != 1) throw StructureError("multiclass instance must have exactly one token");
  Task::check_feasible(x, y);
}

SparseVec MulticlassTask::joint_features(const TaskInstance& x, const StructureKey& y) const {
  check_feasible(x, y);
  std::vector<SparseVec::Entry> pairs;
  append_emissions(x, y, pairs);
  return SparseVec::from_pairs(std::move(pairs));
}

double MulticlassTask::loss(const StructureKey& gold, const StructureKey& y) const {
  if (gold.size() != 1 || y.size() != 1) throw StructureError("multiclass structures have length 1");
  return gold[0] == y[0] ? 0.0 : 1.0;
}

int MulticlassTask::best_label(const ModelVector& w, const TaskInstance& x, bool augmented) const {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < num_labels(); ++c) {
    double s = emission(w, x.tokens[0], c);
    if (augmented && c != x.gold[0]) s += 1.0;
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

Inference MulticlassTask::loss_augmented_argmax(const ModelVector& w, const TaskInstance& x) const {
  const int best = best_label(w, x, true);
  const double gold_score = emission(w, x.tokens[0], x.gold[0]);
  const double violation =
      (best == x.gold[0] ? 0.0 : 1.0) + emission(w, x.tokens[0], best) - gold_score;
  return {{best}, std::max(0.0, violation)};
}

StructureKey MulticlassTask::predict(const ModelVector& w, const TaskInstance& x) const {
  return {best_label(w, x, false)};
}

// --- linear chain -----------------------------------------------------------

ChainTask::ChainTask(int num_labels, int hash_bits) : Task(num_labels, hash_bits) {
  transition_slots_.reserve(static_cast<std::size_t>(num_labels * num_labels));
  for (int a = 0; a < num_labels; ++a) {
    for (int b = 0; b < num_labels; ++b) {
      transition_slots_.push_back(
          hash_feature({"trans", conjoin(std::to_string(a), std::to_string(b))}, hash_bits));
    }
  }
}

SparseVec ChainTask::joint_features(const TaskInstance& x, const StructureKey& y) const {
  check_feasible(x, y);
  std::vector<SparseVec::Entry> pairs;
  append_emissions(x, y, pairs);
  for (std::size_t t = 0; t + 1 < y.size(); ++t) {
    pairs.push_back({transition_slot(y[t], y[t + 1]), 1.0});
  }
  return SparseVec::from_pairs(std::move(pairs));
}

double ChainTask::loss(const StructureKey& gold, const StructureKey& y) const {
  if (gold.size() != y.size()) throw StructureError("Hamming loss needs equal lengths");
  double mismatches = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) mismatches += gold[t] != y[t] ? 1.0 : 0.0;
  return mismatches;
}

double ChainTask::path_score(const ModelVector& w, const TaskInstance& x, const StructureKey& y,
                             bool augmented) const {
  double acc = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    double node = emission(w, x.tokens[t], y[t]);
    if (augmented && y[t] != x.gold[t]) node += 1.0;
    acc += node;
    if (t + 1 < y.size()) acc += w(transition_slot(y[t], y[t + 1]));
  }
  return acc;
}

// Backward max-sum recursion followed by a forward decode that picks the
// smallest label among exact ties, which yields the lexicographically
// smallest optimal sequence.
StructureKey ChainTask::viterbi(const ModelVector& w, const TaskInstance& x,
                                bool augmented) const {
  const std::size_t length = x.length();
  if (length == 0) return {};
  const auto labels = static_cast<std::size_t>(num_labels());

  Eigen::MatrixXd node(static_cast<Eigen::Index>(labels), static_cast<Eigen::Index>(length));
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t l = 0; l < labels; ++l) {
      double s = emission(w, x.tokens[t], static_cast<int>(l));
      if (augmented && static_cast<int>(l) != x.gold[t]) s += 1.0;
      node(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t)) = s;
    }
  }
  Eigen::MatrixXd edge(static_cast<Eigen::Index>(labels), static_cast<Eigen::Index>(labels));
  for (std::size_t a = 0; a < labels; ++a) {
    for (std::size_t b = 0; b < labels; ++b) {
      edge(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          w(transition_slot(static_cast<int>(a), static_cast<int>(b)));
    }
  }

  // suffix(l, t): best score of positions t.. given label l at t
  Eigen::MatrixXd suffix(node.rows(), node.cols());
  const auto last = static_cast<Eigen::Index>(length - 1);
  suffix.col(last) = node.col(last);
  auto continuation = [&](Eigen::Index from, Eigen::Index t, Eigen::Index to) {
    return edge(from, to) + suffix(to, t + 1);
  };
  for (Eigen::Index t = last - 1; t >= 0; --t) {
    for (Eigen::Index a = 0; a < node.rows(); ++a) {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index b = 0; b < node.rows(); ++b) best = std::max(best, continuation(a, t, b));
      suffix(a, t) = node(a, t) + best;
    }
  }

  StructureKey y(length);
  Eigen::Index current = 0;
  for (Eigen::Index l = 1; l < node.rows(); ++l) {
    if (suffix(l, 0) > suffix(current, 0)) current = l;
  }
  y[0] = static_cast<int>(current);
  for (Eigen::Index t = 0; t < last; ++t) {
    Eigen::Index next = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < node.rows(); ++b) {
      const double s = continuation(current, t, b);
      if (s > best) {
        best = s;
        next = b;
      }
    }
    y[static_cast<std::size_t>(t + 1)] = static_cast<int>(next);
    current = next;
  }
  return y;
}

Inference ChainTask::loss_augmented_argmax(const ModelVector& w, const TaskInstance& x) const {
  StructureKey best = viterbi(w, x, true);
  const double violation =
      loss(x.gold, best) + path_score(w, x, best, false) - path_score(w, x, x.gold, false);
  return {std::move(best), std::max(0.0, violation)};
}

StructureKey ChainTask::predict(const ModelVector& w, const TaskInstance& x) const {
  return viterbi(w, x, false);
}

std::unique_ptr<Task> make_task(TaskKind kind, int num_labels, int hash_bits) {
  if (kind == TaskKind::multiclass) return std::make_unique<MulticlassTask>(num_labels, hash_bits);
  return std::make_unique<ChainTask>(num_labels, hash_bits);
}

}  // namespace bqo
