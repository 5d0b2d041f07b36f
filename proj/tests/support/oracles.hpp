#ifndef BQO_TESTS_ORACLES_HPP
#define BQO_TESTS_ORACLES_HPP

#include "bqo/dual.hpp"
#include "bqo/io.hpp"
#include "bqo/task.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <utility>
#include <vector>

namespace bqo::testing {

using Rng = std::mt19937_64;

/// Explicit dual f(α) = ½αᵀHα − vᵀα with H = Q + A/2C, one variable per
/// (instance, non-gold structure).
struct DenseDual {
  Eigen::MatrixXd h;
  Eigen::VectorXd v;
  std::vector<std::pair<std::size_t, StructureKey>> variables;  // (instance, y)

  double objective(const Eigen::VectorXd& alpha) const {
    return 0.5 * alpha.dot(h * alpha) - v.dot(alpha);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& alpha) const { return h * alpha - v; }
};

DenseDual dense_dual_all_structures(const Task& task, std::span<const TaskInstance> data, double c);
/// Same form over the entries already in a working set; also returns their α.
DenseDual dense_dual_of(const DualState& state, double c, Eigen::VectorXd* alpha = nullptr);

struct OracleSolution {
  Eigen::VectorXd alpha;
  double objective = 0.0;
  double projected_gradient = 0.0;  // ∞-norm at the returned point
  int iterations = 0;
};

/// Accelerated projected gradient with adaptive restart, followed by an
/// exact solve on the identified free set.
OracleSolution solve_projected_gradient(const DenseDual& dual, double tol = 1e-13,
                                        int max_iterations = 200000);

/// ŷ and its violation by scoring every structure from scratch.
Inference brute_force_argmax(const Task& task, const ModelVector& w, const TaskInstance& x);

std::vector<TaskInstance> random_multiclass(const Task& task, int instances, int features,
                                            Rng& rng);
std::vector<TaskInstance> random_chain(const Task& task, int instances, int max_length,
                                       int vocabulary, Rng& rng);
ModelVector random_weights(Eigen::Index dimension, double scale, Rng& rng);

/// Generated chain corpus routed through the text format and loader.
std::vector<TaskInstance> chain_corpus(const Task& task, const ChainCorpusSpec& spec,
                                       LabelVocabulary& vocab);

}  // namespace bqo::testing

#endif  // BQO_TESTS_ORACLES_HPP
