#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace woundnet::eval {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// Counts for predictions `score >= threshold` against binary labels.
ConfusionCounts confusion(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          double threshold);
ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

/// A metric whose denominator is zero is nullopt, never 0.
struct BasicMetrics {
  std::optional<double> accuracy, sensitivity, specificity;
};
BasicMetrics basic_metrics(const ConfusionCounts& c);

/// Mann-Whitney AUC via midranks. Throws ValidationError on single-class input.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// O(P*N) pairwise counting with half credit for ties; used as an oracle.
double auc_pairwise(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
  double fpr, tpr;
};
struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;              // trapezoidal area over `points`
};
/// One point per distinct score (tied scores share a threshold), plus endpoints.
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Highest tpr reached at the largest curve fpr not exceeding `fpr`.
double step_tpr(const RocCurve& curve, double fpr);

struct RocBand {
  std::vector<double> fpr, lower, mean, upper;
};
struct RocBandOptions {
  std::size_t n_boot = 2000;
  std::size_t grid = 101;
  double level = 0.95;
  std::uint64_t seed = 0;
};
/// Vertical averaging over image-level bootstrap replicates. Replicate r
/// draws from its own substream, so results do not depend on evaluation order.
RocBand roc_band(std::span<const double> scores, std::span<const std::uint8_t> labels,
                 const RocBandOptions& options = {});

/// Linear interpolation between order statistics (the "type 7" rule).
double percentile(std::vector<double> values, double q);

/// nullopt when chance agreement is 1 (both raters constant and equal).
std::optional<double> cohens_kappa(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

enum class Verdict { superior, non_inferior, inferior };
std::string to_string(Verdict v);
/// superior: difference > 0 and the interval lies above 0; inferior: the
/// mirror image; everything else non-inferior.
Verdict decide(double difference, double ci_low, double ci_high);

struct KappaComparison {
  double kappa_model = 0.0;
  double kappa_rater = 0.0;
  double difference = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Verdict verdict = Verdict::non_inferior;
  std::size_t degenerate_replicates = 0;
  /// percentile interval excludes the point estimate; reported, not an error
  bool point_outside_ci = false;
};
struct BootstrapOptions {
  std::size_t n_boot = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
};
/// Paired bootstrap over images of kappa(model, truth) - kappa(rater, truth).
/// Replicates with an undefined kappa are skipped; more than 10% of them is
/// an error.
KappaComparison kappa_difference_ci(std::span<const std::uint8_t> model, std::span<const std::uint8_t> rater,
                                    std::span<const std::uint8_t> truth, const BootstrapOptions& options = {});

}  // namespace woundnet::eval
