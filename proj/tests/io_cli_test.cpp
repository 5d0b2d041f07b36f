#include "bqo/cli.hpp"
#include "bqo/io.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace bqo;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("bqo_io_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

// Drops the wall-clock columns (2 and 6..8) of a metrics row.
std::string value_columns(const std::string& row) {
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  std::string out;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (k == 2 || k >= 6) continue;
    out += cols[k] + ",";
  }
  return out;
}

void write_corpus(const fs::path& p, std::uint64_t seed, int sequences) {
  ChainCorpusSpec spec;
  spec.sequences = sequences;
  spec.seed = seed;
  std::ofstream out(p);
  write_sequence_corpus(out, generate_chain_corpus(spec));
}

}  // namespace

TEST_CASE("sequence corpus loader reads token/tag blocks") {
  std::stringstream in("The\tDT\ndog\tNN\r\n\n\nRan\tVB\n");
  LabelVocabulary vocab;
  const auto raw = load_sequence_corpus(in, vocab);
  REQUIRE(raw.size() == 2);
  CHECK(raw[0].gold == StructureKey{0, 1});
  CHECK(raw[1].gold == StructureKey{2});
  CHECK(vocab.names() == std::vector<std::string>{"DT", "NN", "VB"});
  CHECK(raw[1].id == 1);

  std::stringstream unseen("cat\tNN\nzz\tXX\n");
  const auto test = load_sequence_corpus(unseen, vocab, false);
  CHECK(test[0].gold == StructureKey{1, -1});
  CHECK(vocab.size() == 3);

  std::stringstream bad("a\tDT\nbroken line\n");
  try {
    load_sequence_corpus(bad, vocab);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("token template emits word, affix and shape features") {
  const auto f = token_features("Año2024");
  std::vector<std::string> names;
  for (const auto& x : f) names.push_back(x.name);
  CHECK(names == std::vector<std::string>{"w=año2024", "p3=año", "s3=024", "digit", "cap"});
  CHECK(token_features("ab").at(1).name == "p3=ab");
}

TEST_CASE("multiclass loader reads sparse lines") {
  std::stringstream in("2 1:0.5 7:1\n0 3:-2\n");
  const auto raw = load_multiclass(in);
  REQUIRE(raw.size() == 2);
  CHECK(raw[0].gold == StructureKey{2});
  REQUIRE(raw[0].tokens.size() == 1);
  CHECK(raw[0].tokens[0].size() == 2);
  CHECK(raw[0].tokens[0][1].name == "7");
  CHECK(raw[1].tokens[0][0].value == -2.0);
  for (const char* bad : {"1 3:1 2:1\n", "x 1:1\n", "1 1-1\n", "1 1:abc\n", "-1 1:1\n"}) {
    std::stringstream s(bad);
    CHECK_THROWS_AS(load_multiclass(s), ParseError);
  }
}

TEST_CASE("models round-trip bit-exactly") {
  SavedModel model;
  model.hash_bits = 10;
  model.labels = {"DT", "NN", "VB"};
  testing::Rng rng(5);
  model.weights = testing::random_weights(1024, 1.0, rng);
  model.weights(3) = -0.0;
  std::stringstream buf;
  save_model(model, buf);
  const SavedModel back = load_model(buf);
  CHECK(back.hash_bits == 10);
  CHECK(back.labels == model.labels);
  CHECK(std::memcmp(back.weights.data(), model.weights.data(), 1024 * sizeof(double)) == 0);

  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_model(truncated), ParseError);
  bytes[0] = 'X';
  std::stringstream bad_magic(bytes);
  CHECK_THROWS_AS(load_model(bad_magic), ParseError);
}

TEST_CASE("metrics rows use the fixed header and round-trippable numbers") {
  std::stringstream out;
  write_metrics_header(out);
  MetricsRow row;
  row.method = "bqo";
  row.outer_iter = 3;
  row.wall_time_s = 0.1;
  row.test_accuracy = 0.5;
  row.ws_size = 12;
  write_metrics_row(out, row);
  const auto rows = lines(out.str());
  CHECK(rows[0] ==
        "method,outer_iter,wall_time_s,dual_obj,test_accuracy,ws_size,time_inference_s,"
        "time_learning_s,time_comm_s");
  CHECK(rows[1] == "bqo,3,0.10000000000000001,nan,0.5,12,0,0,0");
}

TEST_CASE("generated corpora are reproducible and share a language across seeds") {
  ChainCorpusSpec spec;
  spec.sequences = 30;
  const auto a = generate_chain_corpus(spec);
  const auto b = generate_chain_corpus(spec);
  std::stringstream sa, sb;
  write_sequence_corpus(sa, a);
  write_sequence_corpus(sb, b);
  CHECK(sa.str() == sb.str());

  spec.seed = 2;
  std::set<std::string> vocab_a, vocab_c;
  for (const auto& s : a) for (const auto& t : s) vocab_a.insert(t.token);
  for (const auto& s : generate_chain_corpus(spec)) for (const auto& t : s) vocab_c.insert(t.token);
  std::size_t shared = 0;
  for (const auto& w : vocab_c) shared += vocab_a.count(w);
  CHECK(shared * 2 > vocab_c.size());

  MulticlassCorpusSpec mspec;
  std::stringstream m1, m2;
  write_multiclass(m1, generate_multiclass_corpus(mspec));
  write_multiclass(m2, generate_multiclass_corpus(mspec));
  CHECK(m1.str() == m2.str());
  CHECK(load_multiclass(m1).size() == static_cast<std::size_t>(mspec.instances));
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch_dir();
  const std::string train = (dir / "train.txt").string();
  const std::string test = (dir / "test.txt").string();
  write_corpus(train, 1, 60);
  write_corpus(test, 2, 30);

  CHECK(cli::run({}) == cli::kExitUsage);
  CHECK(cli::run({"train"}) == cli::kExitUsage);
  CHECK(cli::run({"train", "--train", train, "--workers", "0"}) == cli::kExitUsage);
  CHECK(cli::run({"train", "--train", train, "--hash-bits", "40"}) == cli::kExitUsage);
  CHECK(cli::run({"train", "--train", train, "--transport", "tcp"}) == cli::kExitUsage);
  CHECK(cli::run({"train", "--train", train, "--method", "svm"}) == cli::kExitUsage);
  CHECK(cli::run({"train", "--train", (dir / "missing.txt").string()}) == cli::kExitIo);
  CHECK(cli::run({"train", "--task", "multiclass", "--train", train}) == cli::kExitIo);
  CHECK(cli::run({"train", "--task", "chain", "--train", train, "--workers", "2", "--transport", "tcp",
                  "--coordinator", "127.0.0.1:1", "--rank", "1", "--timeout", "0.2"}) ==
        cli::kExitCluster);
}

TEST_CASE("train writes metrics and a model that eval can score") {
  const fs::path dir = scratch_dir();
  const std::string train = (dir / "train.txt").string();
  const std::string test = (dir / "test.txt").string();
  write_corpus(train, 1, 60);
  write_corpus(test, 2, 30);

  std::vector<std::string> runs;
  for (int repeat = 0; repeat < 2; ++repeat) {
    const std::string metrics = (dir / ("m" + std::to_string(repeat) + ".csv")).string();
    const std::string model = (dir / "model.bin").string();
    REQUIRE(cli::run({"train", "--task", "chain", "--train", train, "--test", test, "--workers",
                      "3", "--outer-iters", "8", "--hash-bits", "14", "--metrics-out", metrics,
                      "--model-out", model}) == cli::kExitOk);
    runs.push_back(slurp(metrics));
    const SavedModel saved = load_model(model);
    CHECK(saved.hash_bits == 14);
    CHECK(saved.weights.size() == (1 << 14));
    CHECK(cli::run({"eval", "--task", "chain", "--model", model, "--test", test}) == cli::kExitOk);
  }
  const auto a = lines(runs[0]);
  const auto b = lines(runs[1]);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() >= 2);
  CHECK(a[0] == kMetricsHeader);
  for (std::size_t k = 1; k < a.size(); ++k) CHECK(value_columns(a[k]) == value_columns(b[k]));
  CHECK(a[1].rfind("bqo,0,", 0) == 0);

  for (const char* method : {"perceptron", "average"}) {
    const std::string metrics = (dir / (std::string(method) + ".csv")).string();
    CHECK(cli::run({"train", "--task", "chain", "--method", method, "--train", train, "--workers",
                    "2", "--hash-bits", "14", "--rounds", "3", "--outer-iters", "5",
                    "--metrics-out", metrics}) == cli::kExitOk);
    const auto rows = lines(slurp(metrics));
    CHECK(rows.size() >= 2);
    CHECK(rows[1].rfind(method, 0) == 0);
  }

  const std::string out = (dir / "gen.txt").string();
  CHECK(cli::run({"gen", "--task", "chain", "--sequences", "5", "--out", out}) == cli::kExitOk);
  LabelVocabulary vocab;
  CHECK(load_sequence_corpus(out, vocab).size() == 5);
}
