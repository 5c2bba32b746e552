#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "woundnet/manifest.hpp"
#include "woundnet/metrics.hpp"

namespace woundnet::eval {

using data::kNumTasks;
using data::LabelVector;
using TaskProbabilities = std::array<double, kNumTasks>;

/// image_id -> per-task probability, in manifest order.
struct ProbabilityTable {
  std::vector<std::string> image_ids;
  std::vector<TaskProbabilities> probabilities;
};
/// `image_id,deep,...,pressure` with round-trip exact decimal values.
void save_probabilities(const ProbabilityTable& table, const std::filesystem::path& path);
ProbabilityTable load_probabilities(const std::filesystem::path& path);

struct RaterRecord {
  std::string rater_id;
  std::map<std::string, LabelVector> answers;
};
/// `image_id,deep,...,pressure` with 0/1 answers; rater id defaults to the file stem.
RaterRecord load_rater(const std::filesystem::path& path);
void save_rater(const RaterRecord& rater, const std::filesystem::path& path);

/// Proportional allocation over the 5-bit label vectors, largest remainder,
/// seeded draw within each stratum. Samples keep their manifest order.
data::DatasetManifest stratified_subsample(const data::DatasetManifest& manifest, std::size_t n,
                                           std::uint64_t seed);

struct TaskMetrics {
  std::string task;
  ConfusionCounts counts;
  BasicMetrics metrics;
  std::optional<double> auc;  // absent for single-class test labels
  double threshold = 0.5;
};
struct Table2Report {
  std::vector<TaskMetrics> rows;
  std::string to_text() const;
  nlohmann::json to_json() const;
};
/// Per-task metrics of `probabilities` against `truth`, aligned by position.
Table2Report metrics_report(const std::vector<TaskProbabilities>& probabilities,
                            const std::vector<LabelVector>& truth, const std::array<double, kNumTasks>& thresholds);

struct Table3Entry {
  std::string rater_id;
  std::array<KappaComparison, kNumTasks> tasks;
};
struct Table3Report {
  std::vector<Table3Entry> raters;
  std::string to_text() const;
  nlohmann::json to_json() const;
};
/// Model answers are probabilities thresholded per task; every rater must
/// answer every image of `truth_ids`.
Table3Report compare_report(const ProbabilityTable& model, const std::map<std::string, LabelVector>& truth,
                            const std::vector<RaterRecord>& raters, const std::array<double, kNumTasks>& thresholds,
                            const BootstrapOptions& options);

/// "0.739", or "NA" for an undefined value.
std::string format_metric(std::optional<double> v);

}  // namespace woundnet::eval
