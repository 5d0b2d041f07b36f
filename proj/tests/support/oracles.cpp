#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bqo::testing {
namespace {

DenseDual assemble(const std::vector<SparseVec>& phis, std::vector<double> deltas,
                   std::vector<std::pair<std::size_t, StructureKey>> vars, double c) {
  const auto n = static_cast<Eigen::Index>(phis.size());
  DenseDual out;
  out.h.resize(n, n);
  out.v = Eigen::Map<Eigen::VectorXd>(deltas.data(), n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      double value = phis[a].dot(phis[b]);
      if (vars[a].first == vars[b].first) value += 1.0 / (2.0 * c);
      out.h(a, b) = value;
      out.h(b, a) = value;
    }
  }
  out.variables = std::move(vars);
  return out;
}

Eigen::VectorXd project(Eigen::VectorXd x) { return x.cwiseMax(0.0); }

double projected_gradient_norm(const DenseDual& dual, const Eigen::VectorXd& alpha) {
  const Eigen::VectorXd g = dual.gradient(alpha);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    const double pg = alpha(k) > 0.0 ? g(k) : std::min(0.0, g(k));
    worst = std::max(worst, std::abs(pg));
  }
  return worst;
}

// Solve H_FF α_F = v_F on the free set; keep it only if feasible and no worse.
void polish(const DenseDual& dual, OracleSolution& sol) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 0; k < sol.alpha.size(); ++k) {
    if (sol.alpha(k) > 0.0) free.push_back(k);
  }
  if (free.empty()) return;
  const auto m = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd hff(m, m);
  Eigen::VectorXd vf(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    vf(a) = dual.v(free[a]);
    for (Eigen::Index b = 0; b < m; ++b) hff(a, b) = dual.h(free[a], free[b]);
  }
  const Eigen::VectorXd xf = hff.completeOrthogonalDecomposition().solve(vf);
  if ((xf.array() < 0.0).any()) return;
  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(sol.alpha.size());
  for (Eigen::Index a = 0; a < m; ++a) candidate(free[a]) = xf(a);
  if (projected_gradient_norm(dual, candidate) <= sol.projected_gradient &&
      dual.objective(candidate) <= sol.objective) {
    sol.alpha = candidate;
    sol.objective = dual.objective(candidate);
    sol.projected_gradient = projected_gradient_norm(dual, candidate);
  }
}

}  // namespace

DenseDual dense_dual_all_structures(const Task& task, std::span<const TaskInstance> data,
                                    double c) {
  std::vector<SparseVec> phis;
  std::vector<double> deltas;
  std::vector<std::pair<std::size_t, StructureKey>> vars;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& y : task.enumerate_structures(data[i])) {
      if (y == data[i].gold) continue;
      phis.push_back(task.joint_features(data[i], data[i].gold) - task.joint_features(data[i], y));
      deltas.push_back(task.loss(data[i].gold, y));
      vars.emplace_back(i, y);
    }
  }
  return assemble(phis, std::move(deltas), std::move(vars), c);
}

DenseDual dense_dual_of(const DualState& state, double c, Eigen::VectorXd* alpha) {
  std::vector<SparseVec> phis;
  std::vector<double> deltas;
  std::vector<double> alphas;
  std::vector<std::pair<std::size_t, StructureKey>> vars;
  for (std::size_t i = 0; i < state.instances.size(); ++i) {
    for (const auto& e : state.instances[i].entries) {
      phis.push_back(e.phi);
      deltas.push_back(e.delta);
      alphas.push_back(e.alpha);
      vars.emplace_back(i, e.structure);
    }
  }
  if (alpha != nullptr) {
    *alpha = Eigen::Map<Eigen::VectorXd>(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
  }
  return assemble(phis, std::move(deltas), std::move(vars), c);
}

OracleSolution solve_projected_gradient(const DenseDual& dual, double tol, int max_iterations) {
  const Eigen::Index n = dual.v.size();
  OracleSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(n);
  if (n == 0) return sol;

  const double lipschitz =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dual.h, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .maxCoeff();
  const double step = 1.0 / lipschitz;

  Eigen::VectorXd x = sol.alpha;
  Eigen::VectorXd y = x;
  double momentum = 1.0;
  double fx = dual.objective(x);
  int k = 0;
  for (; k < max_iterations; ++k) {
    const Eigen::VectorXd next = project(y - step * dual.gradient(y));
    const double fnext = dual.objective(next);
    if (fnext > fx) {  // restart
      momentum = 1.0;
      y = x;
      continue;
    }
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    y = next + ((momentum - 1.0) / next_momentum) * (next - x);
    momentum = next_momentum;
    x = next;
    fx = fnext;
    if (k % 50 == 0 && projected_gradient_norm(dual, x) < tol) break;
  }
  sol.alpha = x;
  sol.objective = fx;
  sol.projected_gradient = projected_gradient_norm(dual, x);
  sol.iterations = k;
  polish(dual, sol);
  return sol;
}

Inference brute_force_argmax(const Task& task, const ModelVector& w, const TaskInstance& x) {
  const double gold_score = task.joint_features(x, x.gold).dot(w);
  Inference best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& y : task.enumerate_structures(x)) {
    const double value = task.joint_features(x, y).dot(w) + task.loss(x.gold, y);
    if (value > best_value) {
      best_value = value;
      best.structure = y;
    }
  }
  best.violation = std::max(0.0, best_value - gold_score);
  return best;
}

std::vector<TaskInstance> random_multiclass(const Task& task, int instances, int features,
                                            Rng& rng) {
  std::uniform_int_distribution<int> pick_label(0, task.num_labels() - 1);
  std::uniform_int_distribution<int> pick_count(1, std::max(1, features / 2));
  std::uniform_int_distribution<int> pick_feature(0, features - 1);
  std::normal_distribution<double> value(0.0, 1.0);
  std::vector<TaskInstance> out;
  for (int i = 0; i < instances; ++i) {
    RawInstance raw;
    raw.id = i;
    const int label = pick_label(rng);
    std::vector<RawInstance::Feature> bag;
    const int count = pick_count(rng);
    for (int f = 0; f < count; ++f) {
      // a label-specific feature keeps the problem learnable
      const int id = f == 0 ? label : pick_feature(rng);
      bag.push_back({"f" + std::to_string(id), value(rng) + (f == 0 ? 1.5 : 0.0)});
    }
    raw.tokens.push_back(std::move(bag));
    raw.gold = {label};
    out.push_back(task.compile(raw));
  }
  return out;
}

std::vector<TaskInstance> random_chain(const Task& task, int instances, int max_length,
                                       int vocabulary, Rng& rng) {
  std::uniform_int_distribution<int> pick_label(0, task.num_labels() - 1);
  std::uniform_int_distribution<int> pick_length(1, max_length);
  std::uniform_int_distribution<int> pick_word(0, vocabulary - 1);
  std::bernoulli_distribution second_feature(0.5);
  std::vector<TaskInstance> out;
  for (int i = 0; i < instances; ++i) {
    RawInstance raw;
    raw.id = i;
    const int length = pick_length(rng);
    for (int t = 0; t < length; ++t) {
      std::vector<RawInstance::Feature> bag{{"w=" + std::to_string(pick_word(rng)), 1.0}};
      if (second_feature(rng)) bag.push_back({"p=" + std::to_string(pick_word(rng)), 0.5});
      raw.tokens.push_back(std::move(bag));
      raw.gold.push_back(pick_label(rng));
    }
    out.push_back(task.compile(raw));
  }
  return out;
}

ModelVector random_weights(Eigen::Index dimension, double scale, Rng& rng) {
  std::normal_distribution<double> value(0.0, scale);
  ModelVector w(dimension);
  for (Eigen::Index k = 0; k < dimension; ++k) w(k) = value(rng);
  return w;
}

std::vector<TaskInstance> chain_corpus(const Task& task, const ChainCorpusSpec& spec,
                                       LabelVocabulary& vocab) {
  std::stringstream text;
  write_sequence_corpus(text, generate_chain_corpus(spec));
  std::vector<TaskInstance> out;
  for (const auto& raw : load_sequence_corpus(text, vocab, true)) out.push_back(task.compile(raw));
  return out;
}

}  // namespace bqo::testing
