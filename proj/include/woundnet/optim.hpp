#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "woundnet/autodiff.hpp"

namespace woundnet::ad {

enum class OptimizerKind { sgd, adam };

struct LrSchedule {
  enum class Kind { constant, cosine } kind = Kind::constant;
  /// Steps over which the cosine schedule decays to `floor_fraction * base`.
  std::uint64_t total_steps = 0;
  double floor_fraction = 0.0;

  double at(double base_lr, std::uint64_t step) const;
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  LrSchedule schedule;
  /// Adam moments keyed by parameter name.
  std::unordered_map<std::string, NdArray> first_moment;
  std::unordered_map<std::string, NdArray> second_moment;
};

OptimizerKind parse_optimizer(const std::string& name);

/// Applies one update to every trainable parameter using its `grad`.
/// Throws NumericError naming the first parameter whose gradient is not finite;
/// no parameter is modified in that case.
void sgd_adam_step(OptimizerState& state, const std::vector<Parameter*>& params, double lr);

}  // namespace woundnet::ad
