#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "woundnet/autodiff.hpp"

namespace woundnet::ad {

/// Builds the scalar loss on a fresh tape from the current parameter values.
using LossClosure = std::function<Var(Tape&)>;

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  /// max|analytic - numeric| / max(1, max|numeric|) over the checked entries.
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const;
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Entries sampled per parameter; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients against central finite differences.
/// The closure must be deterministic: two evaluations at the same point are
/// compared bitwise and a ContractError is thrown when they differ.
GradCheckReport check_gradients(const LossClosure& loss, const std::vector<Parameter*>& params,
                                const GradCheckOptions& opts = {});

}  // namespace woundnet::ad
