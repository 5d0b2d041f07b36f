#include "bqo/cli.hpp"

#include "bqo/baselines.hpp"
#include "bqo/driver.hpp"
#include "bqo/io.hpp"
#include "bqo/log.hpp"
#include "bqo/tcp.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

namespace bqo::cli {
namespace {

struct TrainOptions {
  std::string task = "multiclass";
  std::string method = "bqo";
  std::string train_path;
  std::string test_path;
  int workers = 1;
  std::string transport = "inproc";
  std::string coordinator;
  int rank = 0;
  double c = 0.1;
  double theta = 0.0;
  double lambda_scale = 1e-4;
  double lambda = 0.0;
  int hash_bits = 18;
  int inner_epochs = 10;
  int outer_iters = 100;
  int inference_interval = 1;
  std::uint64_t seed = 42;
  std::string metrics_out;
  std::string model_out;
  int rounds = 10;
  int epochs_per_round = 1;
  std::string mixing = "uniform";
  bool averaged = false;
  double timeout_s = 120.0;
};

struct GenOptions {
  std::string task = "chain";
  int sequences = 100;
  int length = 8;
  int labels = 5;
  int instances = 100;
  int features = 50;
  std::uint64_t seed = 1;
  std::uint64_t language_seed = 1;
  std::string out;
};

struct EvalOptions {
  std::string task = "multiclass";
  std::string model;
  std::string test_path;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::unique_ptr<Task> task;
  std::vector<std::string> labels;
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> test;
};

TaskKind parse_task(const std::string& name) {
  if (name == "multiclass") return TaskKind::multiclass;
  if (name == "chain") return TaskKind::chain;
  throw UsageError("unknown task " + name);
}

std::vector<RawInstance> load_raw(TaskKind kind, const std::string& path, LabelVocabulary& vocab,
                                  bool grow) {
  if (kind == TaskKind::chain) return load_sequence_corpus(path, vocab, grow);
  auto raw = load_multiclass(path);
  for (auto& inst : raw) inst.gold[0] = vocab.find(std::to_string(inst.gold[0]));
  return raw;
}

// Multiclass label names are the decimal ids 0..max.
LabelVocabulary multiclass_vocabulary(const std::vector<RawInstance>& raw) {
  int max_label = 0;
  for (const auto& inst : raw) max_label = std::max(max_label, inst.gold[0]);
  std::vector<std::string> names;
  for (int l = 0; l <= max_label; ++l) names.push_back(std::to_string(l));
  return LabelVocabulary(std::move(names));
}

Dataset load_dataset(TaskKind kind, const TrainOptions& opt) {
  Dataset data;
  LabelVocabulary vocab;
  std::vector<RawInstance> raw_train;
  if (kind == TaskKind::chain) {
    raw_train = load_sequence_corpus(opt.train_path, vocab, true);
  } else {
    raw_train = load_multiclass(opt.train_path);
    vocab = multiclass_vocabulary(raw_train);
  }
  data.task = make_task(kind, std::max(1, vocab.size()), opt.hash_bits);
  for (const auto& r : raw_train) data.train.push_back(data.task->compile(r));
  if (!opt.test_path.empty()) {
    for (const auto& r : load_raw(kind, opt.test_path, vocab, false)) {
      data.test.push_back(data.task->compile(r));
    }
  }
  data.labels = vocab.names();
  return data;
}

/// Rank 0's metrics sink; wall time accumulates training time only.
class MetricsSink {
 public:
  MetricsSink(const std::string& path, const Task& task, const std::vector<TaskInstance>& eval)
      : task_(task), eval_(eval) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::ios_base::failure("cannot write " + path);
      write_metrics_header(file_);
    }
  }

  void emit(MetricsRow row, const ModelVector& w, double elapsed) {
    wall_ += elapsed;
    row.wall_time_s = wall_;
    row.test_accuracy = evaluate_accuracy(task_, w, eval_);
    last_accuracy_ = row.test_accuracy;
    if (file_.is_open()) write_metrics_row(file_, row);
    log::debug(row.method + " iter " + std::to_string(row.outer_iter) +
               " acc=" + std::to_string(row.test_accuracy));
  }

  double last_accuracy() const { return last_accuracy_; }

 private:
  const Task& task_;
  const std::vector<TaskInstance>& eval_;
  std::ofstream file_;
  double wall_ = 0.0;
  double last_accuracy_ = 0.0;
};

TrainConfig make_config(const TrainOptions& opt) {
  TrainConfig cfg;
  cfg.c = opt.c;
  cfg.theta = opt.theta;
  cfg.lambda = opt.lambda;
  cfg.lambda_scale = opt.lambda_scale;
  cfg.hash_bits = opt.hash_bits;
  cfg.workers = opt.workers;
  cfg.inner_epochs = opt.inner_epochs;
  cfg.outer_iters = opt.outer_iters;
  cfg.inference_interval = opt.inference_interval;
  cfg.rng_seed = opt.seed;
  cfg.validate();
  return cfg;
}

ModelVector run_worker(const TrainOptions& opt, const Dataset& data,
                       std::span<const TaskInstance> shard, Cluster& cluster, MetricsSink* sink) {
  const Task& task = *data.task;
  if (opt.method == "bqo") {
    Trainer trainer(task, shard, make_config(opt), cluster);
    IterationObserver observer;
    if (sink != nullptr) {
      observer = [sink](const IterationStats& s, const Trainer& tr) {
        MetricsRow row{"bqo", s.outer_iter, 0.0, s.dual_obj, 0.0, s.ws_size,
                       s.time_inference_s, s.time_learning_s, s.time_comm_s};
        sink->emit(row, tr.weights(), s.wall_time_s);
      };
    }
    return trainer.train(observer).w;
  }
  if (opt.method == "perceptron") {
    PerceptronConfig pcfg;
    pcfg.rounds = opt.rounds;
    pcfg.epochs_per_round = opt.epochs_per_round;
    pcfg.mixing = opt.mixing == "by-shard-size" ? MixingWeights::by_shard_size : MixingWeights::uniform;
    pcfg.averaged = opt.averaged;
    RoundObserver observer;
    if (sink != nullptr) {
      observer = [sink](const RoundStats& s, const ModelVector& w) {
        MetricsRow row;
        row.method = "perceptron";
        row.outer_iter = s.round;
        row.time_inference_s = s.time_inference_s;
        row.time_learning_s = s.time_learning_s;
        row.time_comm_s = s.time_comm_s;
        sink->emit(row, w, s.wall_time_s);
      };
    }
    return train_distributed_perceptron(shard, task, cluster, pcfg, observer);
  }
  // simple average
  TrainConfig cfg = make_config(opt);
  int local_iters = 0;
  IterationStats totals;
  const auto start = std::chrono::steady_clock::now();
  ModelVector w = train_simple_average(shard, task, cluster, cfg,
                                       [&](const IterationStats& s, const Trainer&) {
                                         ++local_iters;
                                         totals.time_inference_s += s.time_inference_s;
                                         totals.time_learning_s += s.time_learning_s;
                                         totals.time_comm_s += s.time_comm_s;
                                       });
  if (sink != nullptr) {
    MetricsRow row;
    row.method = "average";
    row.outer_iter = local_iters;
    row.time_inference_s = totals.time_inference_s;
    row.time_learning_s = totals.time_learning_s;
    row.time_comm_s = totals.time_comm_s;
    sink->emit(row, w,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return w;
}

int run_train(const TrainOptions& opt) {
  const TaskKind kind = parse_task(opt.task);
  if (opt.method != "bqo" && opt.method != "perceptron" && opt.method != "average") {
    throw UsageError("unknown method " + opt.method);
  }
  if (opt.transport != "inproc" && opt.transport != "tcp") {
    throw UsageError("unknown transport " + opt.transport);
  }
  if (opt.workers < 1) throw UsageError("--workers must be at least 1");
  if (opt.transport == "tcp" && opt.coordinator.empty()) {
    throw UsageError("--transport tcp needs --coordinator HOST:PORT");
  }
  if (opt.rank < 0 || opt.rank >= opt.workers) throw UsageError("--rank must lie in [0, workers)");
  try {
    make_config(opt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  Dataset data = load_dataset(kind, opt);
  const auto shards = partition_round_robin(data.train, opt.workers);
  const std::vector<TaskInstance>& eval = data.test.empty() ? data.train : data.test;
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(opt.timeout_s * 1000.0));

  std::optional<ModelVector> final_w;
  std::optional<MetricsSink> sink;

  if (opt.transport == "inproc") {
    sink.emplace(opt.metrics_out, *data.task, eval);
    auto group = InProcessGroup::create(opt.workers, timeout);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(opt.workers));
    auto work = [&](int rank) {
      try {
        auto cluster = group->handle(rank);
        ModelVector w = run_worker(opt, data, shards[static_cast<std::size_t>(rank)], *cluster,
                                   rank == 0 ? &*sink : nullptr);
        if (rank == 0) final_w = std::move(w);
      } catch (...) {
        errors[static_cast<std::size_t>(rank)] = std::current_exception();
      }
    };
    std::vector<std::thread> threads;
    for (int r = 1; r < opt.workers; ++r) threads.emplace_back(work, r);
    work(0);
    for (auto& t : threads) t.join();
    // prefer a root cause over the collective failures it triggers elsewhere
    std::exception_ptr first_collective;
    for (const auto& e : errors) {
      if (!e) continue;
      try {
        std::rethrow_exception(e);
      } catch (const CollectiveError&) {
        if (!first_collective) first_collective = e;
      }
    }
    if (first_collective) std::rethrow_exception(first_collective);
  } else {
    const Endpoint endpoint = parse_endpoint(opt.coordinator);
    TcpOptions tcp;
    tcp.timeout = timeout;
    std::unique_ptr<Cluster> cluster =
        opt.rank == 0 ? tcp_coordinator(TcpListener(endpoint), opt.workers, tcp)
                      : tcp_join(endpoint, opt.rank, opt.workers, tcp);
    if (opt.rank == 0) sink.emplace(opt.metrics_out, *data.task, eval);
    ModelVector w = run_worker(opt, data, shards[static_cast<std::size_t>(opt.rank)], *cluster,
                               opt.rank == 0 ? &*sink : nullptr);
    if (opt.rank == 0) final_w = std::move(w);
  }

  if (final_w) {
    log::info(opt.method + " finished; accuracy " + std::to_string(sink->last_accuracy()));
    if (!opt.model_out.empty()) {
      save_model({opt.hash_bits, data.labels, *final_w}, opt.model_out);
    }
  }
  return kExitOk;
}

int run_gen(const GenOptions& opt) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!opt.out.empty()) {
    file.open(opt.out);
    if (!file) throw std::ios_base::failure("cannot write " + opt.out);
    out = &file;
  }
  if (parse_task(opt.task) == TaskKind::chain) {
    ChainCorpusSpec spec;
    spec.sequences = opt.sequences;
    spec.length = opt.length;
    spec.labels = opt.labels;
    spec.seed = opt.seed;
    spec.language_seed = opt.language_seed;
    write_sequence_corpus(*out, generate_chain_corpus(spec));
  } else {
    MulticlassCorpusSpec spec;
    spec.instances = opt.instances;
    spec.features = opt.features;
    spec.classes = opt.labels;
    spec.seed = opt.seed;
    spec.language_seed = opt.language_seed;
    write_multiclass(*out, generate_multiclass_corpus(spec));
  }
  return kExitOk;
}

int run_eval(const EvalOptions& opt) {
  const TaskKind kind = parse_task(opt.task);
  SavedModel model = load_model(opt.model);
  LabelVocabulary vocab(model.labels);
  auto task = make_task(kind, std::max(1, vocab.size()), model.hash_bits);
  std::vector<TaskInstance> test;
  for (const auto& r : load_raw(kind, opt.test_path, vocab, false)) test.push_back(task->compile(r));
  std::cout << "accuracy " << evaluate_accuracy(*task, model.weights, test) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Distributed structured SVM trainer"};
  app.require_subcommand(1);

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--task", train.task, "multiclass | chain")
      ->check(CLI::IsMember({"multiclass", "chain"}));
  train_cmd->add_option("--method", train.method, "bqo | perceptron | average")
      ->check(CLI::IsMember({"bqo", "perceptron", "average"}));
  train_cmd->add_option("--train", train.train_path, "training file")->required();
  train_cmd->add_option("--test", train.test_path, "test file");
  train_cmd->add_option("--workers", train.workers, "worker count K");
  train_cmd->add_option("--transport", train.transport, "inproc | tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  train_cmd->add_option("--coordinator", train.coordinator, "HOST:PORT of rank 0");
  train_cmd->add_option("--rank", train.rank, "this process's rank (tcp)");
  train_cmd->add_option("--c", train.c, "SVM regularization C");
  train_cmd->add_option("--theta", train.theta, "block Hessian scale (default K)");
  train_cmd->add_option("--lambda-scale", train.lambda_scale, "relative ridge on H");
  train_cmd->add_option("--lambda", train.lambda, "absolute ridge on H (overrides scale)");
  train_cmd->add_option("--hash-bits", train.hash_bits, "feature hash bits d");
  train_cmd->add_option("--inner-epochs", train.inner_epochs, "subproblem epochs");
  train_cmd->add_option("--outer-iters", train.outer_iters, "outer iterations");
  train_cmd->add_option("--inference-interval", train.inference_interval,
                        "grow working sets every m-th iteration");
  train_cmd->add_option("--seed", train.seed, "RNG seed");
  train_cmd->add_option("--metrics-out", train.metrics_out, "metrics CSV path");
  train_cmd->add_option("--model-out", train.model_out, "model file path");
  train_cmd->add_option("--rounds", train.rounds, "perceptron mixing rounds");
  train_cmd->add_option("--epochs-per-round", train.epochs_per_round, "perceptron local passes");
  train_cmd->add_option("--mixing", train.mixing, "uniform | by-shard-size")
      ->check(CLI::IsMember({"uniform", "by-shard-size"}));
  train_cmd->add_flag("--averaged", train.averaged, "averaged perceptron passes");
  train_cmd->add_option("--timeout", train.timeout_s, "collective timeout in seconds");

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "write a synthetic corpus");
  gen_cmd->add_option("--task", gen.task, "chain | multiclass")
      ->check(CLI::IsMember({"multiclass", "chain"}));
  gen_cmd->add_option("--sequences", gen.sequences, "chain: sequence count");
  gen_cmd->add_option("--length", gen.length, "chain: sequence length");
  gen_cmd->add_option("--labels", gen.labels, "label / class count");
  gen_cmd->add_option("--instances", gen.instances, "multiclass: instance count");
  gen_cmd->add_option("--features", gen.features, "multiclass: feature count");
  gen_cmd->add_option("--seed", gen.seed, "sampling seed");
  gen_cmd->add_option("--language-seed", gen.language_seed, "seed of the shared vocabulary");
  gen_cmd->add_option("--out", gen.out, "output path (default stdout)");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a saved model");
  eval_cmd->add_option("--task", eval.task, "multiclass | chain")
      ->check(CLI::IsMember({"multiclass", "chain"}));
  eval_cmd->add_option("--model", eval.model, "model file")->required();
  eval_cmd->add_option("--test", eval.test_path, "test file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(train);
    if (gen_cmd->parsed()) return run_gen(gen);
    return run_eval(eval);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const CollectiveError& e) {
    log::error(std::string("cluster failure: ") + e.what());
    return kExitCluster;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitIo;
  }
}

}  // namespace bqo::cli
