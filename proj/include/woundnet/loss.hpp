#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "woundnet/autodiff.hpp"

namespace woundnet::model {

struct TaskWeights {
  double neg = 1.0;
  double pos = 1.0;
};

struct ClassWeights {
  std::vector<TaskWeights> tasks;

  static ClassWeights uniform(std::size_t num_tasks) { return {std::vector<TaskWeights>(num_tasks)}; }
  ClassWeights scaled(double k) const;
};

void to_json(nlohmann::json& j, const ClassWeights& w);

struct ClassCounts {
  std::size_t negatives = 0;
  std::size_t positives = 0;
};

/// Balanced inverse frequency: w_c = N / (2 * N_c) for each task and class.
/// Throws ValidationError when a task has an empty class.
ClassWeights compute_class_weights(const std::vector<ClassCounts>& counts,
                                   const std::vector<std::string>& task_names = {});

/// Mean over N and T of w_y * BCE(sigmoid(z), y), evaluated from logits as
/// max(z,0) - z*y + log1p(exp(-|z|)). Labels must be 0 or 1.
ad::Var weighted_bce_loss(ad::Var logits, const NdArray& labels, const ClassWeights& weights);

/// Unweighted mean binary cross-entropy from logits.
ad::Var bce_loss(ad::Var logits, const NdArray& labels);

}  // namespace woundnet::model
