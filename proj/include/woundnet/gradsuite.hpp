#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace woundnet::model {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  double primitive_tolerance = 1e-4;
  double model_tolerance = 1e-3;
  /// Entries sampled per model parameter tensor; 0 checks all of them.
  std::size_t model_entries = 4;
  std::size_t model_input = 16;
};

/// Finite-difference checks of every differentiable primitive at random
/// points, then of the full five-branch model under the weighted BCE loss.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace woundnet::model
