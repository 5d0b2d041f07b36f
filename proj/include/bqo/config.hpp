#ifndef BQO_CONFIG_HPP
#define BQO_CONFIG_HPP

#include <cstdint>

namespace bqo {

struct TrainConfig {
  double c = 0.1;
  double theta = 0.0;         // 0 selects the worker count
  double lambda = 0.0;        // 0 selects lambda_scale * (θ·max‖φ‖² + 1/2C)
  double lambda_scale = 1e-4;
  int hash_bits = 18;
  int workers = 1;
  int inner_epochs = 10;
  double inner_stop_ratio = 0.1;
  int outer_iters = 100;
  int inference_interval = 1;
  double ws_violation_tol = 1e-3;
  int prune_after = 2;        // consecutive zero-α iterations; 0 disables
  bool saturate_working_set = false;
  bool audit = false;         // primal objective and w/α consistency each iteration
  double converge_rel_tol = 1e-6;
  int converge_patience = 3;
  std::uint64_t rng_seed = 42;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  double effective_theta() const { return theta > 0.0 ? theta : static_cast<double>(workers); }
};

}  // namespace bqo

#endif  // BQO_CONFIG_HPP
