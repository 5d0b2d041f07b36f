#include "bqo/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace bqo {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

LabelVocabulary::LabelVocabulary(std::vector<std::string> names) {
  for (auto& n : names) id(n, true);
}

int LabelVocabulary::id(const std::string& name, bool grow) {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  if (!grow) return -1;
  const int next = size();
  ids_.emplace(name, next);
  names_.push_back(name);
  return next;
}

int LabelVocabulary::find(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? -1 : it->second;
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

// UTF-8 code point boundaries, so prefixes never split a character.
std::vector<std::size_t> code_point_starts(const std::string& s) {
  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if ((static_cast<unsigned char>(s[k]) & 0xC0) != 0x80) starts.push_back(k);
  }
  return starts;
}

}  // namespace

std::vector<RawInstance::Feature> token_features(const std::string& token) {
  std::string lower = token;
  for (char& c : lower) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
  }
  const auto starts = code_point_starts(lower);
  const std::size_t n = starts.size();
  const std::string prefix = n > 3 ? lower.substr(0, starts[3]) : lower;
  const std::string suffix = n > 3 ? lower.substr(starts[n - 3]) : lower;

  std::vector<RawInstance::Feature> out;
  out.push_back({"w=" + lower, 1.0});
  out.push_back({"p3=" + prefix, 1.0});
  out.push_back({"s3=" + suffix, 1.0});
  if (std::any_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    out.push_back({"digit", 1.0});
  }
  if (!token.empty() && std::isupper(static_cast<unsigned char>(token[0]))) {
    out.push_back({"cap", 1.0});
  }
  return out;
}

std::vector<RawInstance> load_sequence_corpus(std::istream& in, LabelVocabulary& vocab,
                                              bool grow_vocab) {
  std::vector<RawInstance> out;
  RawInstance current;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    current.id = static_cast<std::int64_t>(out.size());
    out.push_back(std::move(current));
    current = RawInstance{};
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size()) {
      throw ParseError(line_no, "expected 'token<TAB>tag'");
    }
    const std::string token = line.substr(0, tab);
    const std::string tag = line.substr(tab + 1);
    current.tokens.push_back(token_features(token));
    current.gold.push_back(vocab.id(tag, grow_vocab));
  }
  flush();
  return out;
}

std::vector<RawInstance> load_sequence_corpus(const std::string& path, LabelVocabulary& vocab,
                                              bool grow_vocab) {
  auto in = open_input(path);
  return load_sequence_corpus(in, vocab, grow_vocab);
}

std::vector<RawInstance> load_multiclass(std::istream& in) {
  std::vector<RawInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) continue;
    std::istringstream fields(line);
    std::string field;
    fields >> field;

    int label = 0;
    auto [lend, lerr] = std::from_chars(field.data(), field.data() + field.size(), label);
    if (lerr != std::errc{} || lend != field.data() + field.size() || label < 0) {
      throw ParseError(line_no, "label must be a non-negative integer");
    }
    RawInstance inst;
    inst.id = static_cast<std::int64_t>(out.size());
    inst.gold = {label};
    inst.tokens.emplace_back();

    long long previous = -1;
    while (fields >> field) {
      const auto colon = field.find(':');
      if (colon == std::string::npos) throw ParseError(line_no, "expected idx:val, got " + field);
      long long index = 0;
      double value = 0.0;
      const char* begin = field.data();
      const char* mid = begin + colon;
      const char* end = begin + field.size();
      auto [iend, ierr] = std::from_chars(begin, mid, index);
      auto [vend, verr] = std::from_chars(mid + 1, end, value);
      if (ierr != std::errc{} || iend != mid || index < 0 || verr != std::errc{} || vend != end ||
          !std::isfinite(value)) {
        throw ParseError(line_no, "non-numeric feature " + field);
      }
      if (index <= previous) throw ParseError(line_no, "feature indices must strictly increase");
      previous = index;
      inst.tokens[0].push_back({std::to_string(index), value});
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<RawInstance> load_multiclass(const std::string& path) {
  auto in = open_input(path);
  return load_multiclass(in);
}

// --- model file -------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'B', 'Q', 'S', 'M'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    out.put(static_cast<char>(static_cast<std::uint8_t>(value >> (8 * k))));
  }
}

template <typename T>
T get(std::istream& in) {
  T value = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError(0, "model file truncated");
    value |= static_cast<T>(static_cast<std::uint8_t>(c)) << (8 * k);
  }
  return value;
}

}  // namespace

void save_model(const SavedModel& model, std::ostream& out) {
  out.write(kModelMagic, 4);
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.hash_bits));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.labels.size()));
  for (const auto& label : model.labels) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
  put<std::uint64_t>(out, static_cast<std::uint64_t>(model.weights.size()));
  for (Eigen::Index k = 0; k < model.weights.size(); ++k) {
    put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(model.weights(k)));
  }
  if (!out) throw std::ios_base::failure("model write failed");
}

void save_model(const SavedModel& model, const std::string& path) {
  auto out = open_output(path);
  save_model(model, out);
}

SavedModel load_model(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kModelMagic)) {
    throw ParseError(0, "not a model file (bad magic)");
  }
  if (get<std::uint32_t>(in) != kModelFormatVersion) {
    throw ParseError(0, "unsupported model format version");
  }
  SavedModel model;
  model.hash_bits = static_cast<int>(get<std::uint32_t>(in));
  if (model.hash_bits < 1 || model.hash_bits > 30) throw ParseError(0, "invalid hash bits");
  const auto labels = get<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < labels; ++k) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) throw ParseError(0, "model file truncated");
    model.labels.push_back(std::move(name));
  }
  const auto count = get<std::uint64_t>(in);
  if (count != (std::uint64_t{1} << model.hash_bits)) {
    throw ParseError(0, "weight count does not match hash bits");
  }
  model.weights.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t k = 0; k < count; ++k) {
    model.weights(static_cast<Eigen::Index>(k)) = std::bit_cast<double>(get<std::uint64_t>(in));
  }
  return model;
}

SavedModel load_model(const std::string& path) {
  auto in = open_input(path);
  return load_model(in);
}

double evaluate_accuracy(const Task& task, const ModelVector& w,
                         const std::vector<TaskInstance>& data) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const TaskInstance& x : data) {
    const StructureKey y = task.predict(w, x);
    for (std::size_t t = 0; t < y.size(); ++t) correct += y[t] == x.gold[t] ? 1 : 0;
    total += y.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// --- metrics ----------------------------------------------------------------

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.method << ',' << row.outer_iter << ',' << number(row.wall_time_s) << ','
      << number(row.dual_obj) << ',' << number(row.test_accuracy) << ',' << row.ws_size << ','
      << number(row.time_inference_s) << ',' << number(row.time_learning_s) << ','
      << number(row.time_comm_s) << '\n';
  out.flush();
}

// --- synthetic corpora ------------------------------------------------------

namespace {

std::string random_word(std::mt19937_64& rng, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> letter(0, 25);
  std::string w(static_cast<std::size_t>(len(rng)), 'a');
  for (char& c : w) c = static_cast<char>('a' + letter(rng));
  return w;
}

struct ChainLanguage {
  std::vector<std::vector<std::string>> words;  // per label
  std::vector<std::string> ambiguous;
  std::vector<int> successor;                   // preferred next label
};

ChainLanguage make_chain_language(int labels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChainLanguage lang;
  lang.words.resize(static_cast<std::size_t>(labels));
  for (int l = 0; l < labels; ++l) {
    for (int k = 0; k < 12; ++k) {
      std::string w = random_word(rng, 4, 8);
      if (l == 0) w[0] = static_cast<char>(std::toupper(w[0]));  // proper-noun-like
      if (l == labels - 1 && k % 3 == 0) w = std::to_string(1000 + k * 37 + l);  // numerals
      lang.words[static_cast<std::size_t>(l)].push_back(std::move(w));
    }
  }
  for (int k = 0; k < 15; ++k) lang.ambiguous.push_back(random_word(rng, 2, 4));
  lang.successor.resize(static_cast<std::size_t>(labels));
  for (int l = 0; l < labels; ++l) lang.successor[static_cast<std::size_t>(l)] = l;
  std::shuffle(lang.successor.begin(), lang.successor.end(), rng);
  return lang;
}

}  // namespace

std::vector<TaggedSequence> generate_chain_corpus(const ChainCorpusSpec& spec) {
  if (spec.labels < 1 || spec.length < 1 || spec.sequences < 0) {
    throw std::invalid_argument("chain corpus needs labels >= 1 and length >= 1");
  }
  const ChainLanguage lang = make_chain_language(spec.labels, spec.language_seed);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_label(0, spec.labels - 1);
  std::uniform_int_distribution<int> any_word(0, 11);
  std::uniform_int_distribution<int> any_ambiguous(0, 14);

  std::vector<TaggedSequence> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.sequences));
  for (int s = 0; s < spec.sequences; ++s) {
    TaggedSequence seq;
    int label = any_label(rng);
    for (int t = 0; t < spec.length; ++t) {
      if (t > 0) {
        label = coin(rng) < 0.7 ? lang.successor[static_cast<std::size_t>(label)] : any_label(rng);
      }
      const auto l = static_cast<std::size_t>(label);
      std::string token = coin(rng) < spec.noise
                              ? lang.ambiguous[static_cast<std::size_t>(any_ambiguous(rng))]
                              : lang.words[l][static_cast<std::size_t>(any_word(rng))];
      seq.push_back({std::move(token), "T" + std::to_string(label)});
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

void write_sequence_corpus(std::ostream& out, const std::vector<TaggedSequence>& corpus) {
  for (const auto& seq : corpus) {
    for (const auto& tok : seq) out << tok.token << '\t' << tok.tag << '\n';
    out << '\n';
  }
}

std::vector<MulticlassExample> generate_multiclass_corpus(const MulticlassCorpusSpec& spec) {
  if (spec.classes < 1 || spec.features < 1 || spec.instances < 0) {
    throw std::invalid_argument("multiclass corpus needs classes >= 1 and features >= 1");
  }
  std::mt19937_64 lang_rng(spec.language_seed);
  std::uniform_int_distribution<int> any_feature(0, spec.features - 1);
  std::vector<std::vector<int>> prototypes(static_cast<std::size_t>(spec.classes));
  for (auto& proto : prototypes) {
    for (int k = 0; k < 5; ++k) proto.push_back(any_feature(lang_rng));
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_class(0, spec.classes - 1);
  std::vector<MulticlassExample> corpus;
  for (int n = 0; n < spec.instances; ++n) {
    const int truth = any_class(rng);
    std::map<int, double> bag;
    for (int f : prototypes[static_cast<std::size_t>(truth)]) {
      if (coin(rng) < 0.8) bag[f] += 0.5 + coin(rng);
    }
    for (int k = 0; k < 3; ++k) bag[any_feature(rng)] += coin(rng);
    MulticlassExample ex;
    ex.label = coin(rng) < spec.label_noise ? any_class(rng) : truth;
    for (const auto& [f, v] : bag) ex.features.emplace_back(f, v);
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void write_multiclass(std::ostream& out, const std::vector<MulticlassExample>& corpus) {
  for (const auto& ex : corpus) {
    out << ex.label;
    for (const auto& [f, v] : ex.features) out << ' ' << f << ':' << number(v);
    out << '\n';
  }
}

}  // namespace bqo
