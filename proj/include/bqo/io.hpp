#ifndef BQO_IO_HPP
#define BQO_IO_HPP

#include "bqo/task.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bqo {

/// Malformed input file; carries the 1-based line number (0 when not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Tag strings in first-occurrence order.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  explicit LabelVocabulary(std::vector<std::string> names);

  /// Existing id, a new id when `grow`, or −1.
  int id(const std::string& name, bool grow);
  int find(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
};

/// Fixed per-token template: lowercased form, 3-character prefix and suffix
/// of the lowercased form, digit and capitalization flags.
std::vector<RawInstance::Feature> token_features(const std::string& token);

/// "token<TAB>tag" lines, blank line between sequences. Tags are looked up in
/// `vocab`, which grows when `grow_vocab` (unseen tags otherwise map to −1).
std::vector<RawInstance> load_sequence_corpus(std::istream& in, LabelVocabulary& vocab,
                                              bool grow_vocab = true);
std::vector<RawInstance> load_sequence_corpus(const std::string& path, LabelVocabulary& vocab,
                                              bool grow_vocab = true);

/// "label idx:val idx:val ..." lines with strictly increasing indices.
std::vector<RawInstance> load_multiclass(std::istream& in);
std::vector<RawInstance> load_multiclass(const std::string& path);

struct SavedModel {
  int hash_bits = 0;
  std::vector<std::string> labels;
  ModelVector weights;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const SavedModel& model, std::ostream& out);
void save_model(const SavedModel& model, const std::string& path);
/// Throws ParseError on bad magic, version, or truncation.
SavedModel load_model(std::istream& in);
SavedModel load_model(const std::string& path);

/// Fraction of instances (multiclass) or tokens (chain) predicted correctly.
double evaluate_accuracy(const Task& task, const ModelVector& w,
                         const std::vector<TaskInstance>& data);

struct MetricsRow {
  std::string method;
  int outer_iter = 0;
  double wall_time_s = 0.0;
  double dual_obj = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = 0.0;
  std::size_t ws_size = 0;
  double time_inference_s = 0.0;
  double time_learning_s = 0.0;
  double time_comm_s = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "method,outer_iter,wall_time_s,dual_obj,test_accuracy,ws_size,time_inference_s,"
    "time_learning_s,time_comm_s";

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

// Synthetic corpora. The "language" (word lists, transition preferences,
// class prototypes) depends only on `language_seed`, so corpora sampled with
// different `seed`s share it and can serve as train/test pairs.

struct ChainCorpusSpec {
  int sequences = 100;
  int length = 8;
  int labels = 5;
  std::uint64_t seed = 1;
  std::uint64_t language_seed = 1;
  double noise = 0.2;  // probability of an ambiguous token
};

struct TaggedToken {
  std::string token;
  std::string tag;
};
using TaggedSequence = std::vector<TaggedToken>;

std::vector<TaggedSequence> generate_chain_corpus(const ChainCorpusSpec& spec);
void write_sequence_corpus(std::ostream& out, const std::vector<TaggedSequence>& corpus);

struct MulticlassCorpusSpec {
  int instances = 100;
  int features = 50;
  int classes = 4;
  std::uint64_t seed = 1;
  std::uint64_t language_seed = 1;
  double label_noise = 0.05;
};

struct MulticlassExample {
  int label = 0;
  std::vector<std::pair<int, double>> features;  // increasing indices
};

std::vector<MulticlassExample> generate_multiclass_corpus(const MulticlassCorpusSpec& spec);
void write_multiclass(std::ostream& out, const std::vector<MulticlassExample>& corpus);

}  // namespace bqo

#endif  // BQO_IO_HPP
