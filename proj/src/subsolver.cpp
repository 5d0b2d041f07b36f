#include "bqo/subsolver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>

namespace bqo {

DirectionState DirectionState::zero(const DualState& dual, Eigen::Index dimension) {
  DirectionState state;
  state.d.reserve(dual.instances.size());
  for (const auto& inst : dual.instances) state.d.emplace_back(inst.entries.size(), 0.0);
  state.u = ModelVector::Zero(dimension);
  state.t.assign(dual.instances.size(), 0.0);
  return state;
}

bool DirectionState::is_zero() const {
  return std::all_of(d.begin(), d.end(), [](const std::vector<double>& block) {
    return std::all_of(block.begin(), block.end(), [](double v) { return v == 0.0; });
  });
}

double scaled_lambda(const DualState& dual, double theta, double c, double scale) {
  double max_sq = 0.0;
  for (const auto& inst : dual.instances) {
    for (const auto& e : inst.entries) max_sq = std::max(max_sq, e.phi_sq_norm);
  }
  return scale * (theta * max_sq + 1.0 / (2.0 * c));
}

double direction_gradient(EntryRef ref, const DirectionState& state, const DualState& dual,
                          const ModelVector& w, const SubproblemParams& params) {
  const InstanceState& inst = dual.instances[ref.instance];
  const WorkingSetEntry& e = inst.entries[ref.entry];
  const double d = state.d[ref.instance][ref.entry];
  return dual_gradient_entry(e, inst.alpha_sum, w, params.c) + params.theta * e.phi.dot(state.u) +
         state.t[ref.instance] / (2.0 * params.c) + params.lambda * d;
}

namespace {

double apply_step(EntryRef ref, double gradient, DirectionState& state, const DualState& dual,
                  const SubproblemParams& params) {
  const WorkingSetEntry& e = dual.instances[ref.instance].entries[ref.entry];
  const double diagonal = params.theta * e.phi_sq_norm + 1.0 / (2.0 * params.c) + params.lambda;

  double& d = state.d[ref.instance][ref.entry];
  const double old_d = d;
  const double unclamped = -gradient / diagonal;
  if (unclamped <= -(e.alpha + old_d)) {
    d = -e.alpha;  // α + d = 0 exactly
  } else {
    d = old_d + unclamped;
  }
  const double step = d - old_d;
  if (step == 0.0) return 0.0;

  [[maybe_unused]] const double before = state.g_value;
  state.g_value += gradient * step + 0.5 * diagonal * step * step;
  assert(state.g_value <= before);
  e.phi.add_to(state.u, step);
  state.t[ref.instance] += step;
  return step;
}

}  // namespace

double coordinate_update(EntryRef ref, DirectionState& state, const DualState& dual,
                         const ModelVector& w, const SubproblemParams& params) {
  return apply_step(ref, direction_gradient(ref, state, dual, w, params), state, dual, params);
}

double direction_objective(const DirectionState& state, const DualState& dual,
                           const ModelVector& w, const SubproblemParams& params) {
  double linear = 0.0;
  double d_sq = 0.0;
  double t_sq = 0.0;
  for (std::size_t i = 0; i < dual.instances.size(); ++i) {
    const InstanceState& inst = dual.instances[i];
    for (std::size_t j = 0; j < inst.entries.size(); ++j) {
      const double d = state.d[i][j];
      linear += d * dual_gradient_entry(inst.entries[j], inst.alpha_sum, w, params.c);
      d_sq += d * d;
    }
    t_sq += state.t[i] * state.t[i];
  }
  const double quadratic =
      params.theta * state.u.squaredNorm() + t_sq / (2.0 * params.c) + params.lambda * d_sq;
  return linear + 0.5 * quadratic;
}

DirectionState DirectionSolver::solve(const DualState& dual, const ModelVector& w,
                                      const SubproblemParams& params, std::uint64_t seed) {
  DirectionState state = DirectionState::zero(dual, w.size());
  last_epochs_ = 0;

  std::vector<EntryRef> order;
  for (std::size_t i = 0; i < dual.instances.size(); ++i) {
    for (std::size_t j = 0; j < dual.instances[i].entries.size(); ++j) order.push_back({i, j});
  }
  if (order.empty()) return state;

  std::mt19937_64 rng(seed);
  for (int epoch = 0; epoch < params.inner_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_projected = 0.0;
    for (const EntryRef& ref : order) {
      const WorkingSetEntry& e = dual.instances[ref.instance].entries[ref.entry];
      const double gradient = direction_gradient(ref, state, dual, w, params);
      const bool at_bound = e.alpha + state.d[ref.instance][ref.entry] == 0.0;
      const double projected = at_bound ? std::min(gradient, 0.0) : gradient;
      max_projected = std::max(max_projected, std::abs(projected));
      apply_step(ref, gradient, state, dual, params);
    }
    ++last_epochs_;
    if (!reference_ && max_projected > 0.0) reference_ = max_projected;
    if (max_projected == 0.0) break;
    if (reference_ && params.stop_ratio > 0.0 && max_projected < params.stop_ratio * *reference_) {
      break;
    }
  }
  return state;
}

}  // namespace bqo
