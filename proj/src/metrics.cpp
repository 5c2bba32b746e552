#include "woundnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "woundnet/errors.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::eval {
namespace {

void check_binary(std::span<const double> scores, std::span<const std::uint8_t> labels, const char* what) {
  if (scores.size() != labels.size())
    throw ShapeError(std::string(what) + ": " + std::to_string(scores.size()) + " scores but " +
                     std::to_string(labels.size()) + " labels");
  for (auto l : labels)
    if (l > 1) throw ValidationError(std::string(what) + ": labels must be 0 or 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError(std::string(what) + ": non-finite score");
}

std::array<std::size_t, 2> class_sizes(std::span<const std::uint8_t> labels, const char* what) {
  std::array<std::size_t, 2> n{};
  for (auto l : labels) ++n[l];
  if (n[0] == 0 || n[1] == 0)
    throw ValidationError(std::string(what) + ": needs at least one positive and one negative label");
  return n;
}

// Distinct scores in descending order, each with the label indices it covers.
struct ScoreGroups {
  std::vector<std::size_t> group_of;  // per sample
  std::size_t n_groups = 0;
};

ScoreGroups group_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  ScoreGroups g;
  g.group_of.resize(scores.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || scores[order[k]] != scores[order[k - 1]]) ++g.n_groups;
    g.group_of[order[k]] = g.n_groups - 1;
  }
  return g;
}

// Curve from per-group (negative, positive) weights; areas are accumulated in
// integer units and divided once, so the result equals the Mann-Whitney ratio.
RocCurve curve_from_groups(const std::vector<std::array<std::size_t, 2>>& counts, std::size_t neg,
                           std::size_t pos) {
  RocCurve c;
  c.points.reserve(counts.size() + 1);
  c.points.push_back({0.0, 0.0});
  const double n = static_cast<double>(neg), p = static_cast<double>(pos);
  std::size_t fp = 0, tp = 0;
  double twice_area = 0.0;
  for (const auto& g : counts) {
    if (g[0] == 0 && g[1] == 0) continue;
    twice_area += static_cast<double>(g[0]) * static_cast<double>(2 * tp + g[1]);
    fp += g[0];
    tp += g[1];
    c.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
  }
  c.auc = twice_area / (2.0 * n * p);
  return c;
}

// Fills out[k] with step_tpr(curve, grid[k]) for an increasing grid.
void step_on_grid(const RocCurve& curve, const std::vector<double>& grid, std::vector<double>& out) {
  std::size_t i = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    while (i + 1 < curve.points.size() && curve.points[i + 1].fpr <= grid[k]) ++i;
    out[k] = curve.points[i].tpr;
  }
}

double sorted_quantile(const std::vector<double>& v, double q) {
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::array<double, 2> percentile_bounds(std::vector<double> v, double level) {
  std::sort(v.begin(), v.end());
  const double a = (1.0 - level) / 2.0;
  return {sorted_quantile(v, a), sorted_quantile(v, 1.0 - a)};
}

std::optional<double> kappa_from_table(const std::array<std::size_t, 4>& t) {
  // t = {a0b0, a0b1, a1b0, a1b1}
  const double n = static_cast<double>(t[0] + t[1] + t[2] + t[3]);
  const double po = static_cast<double>(t[0] + t[3]) / n;
  const double a1 = static_cast<double>(t[2] + t[3]) / n, b1 = static_cast<double>(t[1] + t[3]) / n;
  const double pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
  if (pe >= 1.0) return std::nullopt;
  return (po - pe) / (1.0 - pe);
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          double threshold) {
  check_binary(scores, labels, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i]) pred ? ++c.tp : ++c.fn;
    else pred ? ++c.fp : ++c.tn;
  }
  return c;
}

ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] > 1 || truth[i] > 1) throw ValidationError("confusion: answers must be 0 or 1");
    if (truth[i]) predicted[i] ? ++c.tp : ++c.fn;
    else predicted[i] ? ++c.fp : ++c.tn;
  }
  return c;
}

BasicMetrics basic_metrics(const ConfusionCounts& c) {
  BasicMetrics m;
  auto ratio = [](std::size_t a, std::size_t b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_binary(scores, labels, "auc");
  const auto n = class_sizes(labels, "auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // twice the midrank sum keeps everything integral
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) twice_rank_sum += twice_mid;
    i = j;
  }
  const double p = static_cast<double>(n[1]), q = static_cast<double>(n[0]);
  return (twice_rank_sum - p * (p + 1.0)) / (2.0 * p * q);
}

double auc_pairwise(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_binary(scores, labels, "auc");
  const auto n = class_sizes(labels, "auc");
  double twice = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      twice += scores[i] > scores[j] ? 2.0 : scores[i] == scores[j] ? 1.0 : 0.0;
    }
  }
  return twice / (2.0 * static_cast<double>(n[0]) * static_cast<double>(n[1]));
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_binary(scores, labels, "roc_curve");
  const auto n = class_sizes(labels, "roc_curve");
  const auto g = group_scores(scores);
  std::vector<std::array<std::size_t, 2>> counts(g.n_groups, {0, 0});
  for (std::size_t i = 0; i < scores.size(); ++i) ++counts[g.group_of[i]][labels[i]];
  return curve_from_groups(counts, n[0], n[1]);
}

double step_tpr(const RocCurve& curve, double fpr) {
  std::vector<double> out(1);
  step_on_grid(curve, {fpr}, out);
  return out[0];
}

RocBand roc_band(std::span<const double> scores, std::span<const std::uint8_t> labels,
                 const RocBandOptions& opt) {
  check_binary(scores, labels, "roc_band");
  class_sizes(labels, "roc_band");
  if (opt.n_boot < 100) throw ValidationError("roc_band: n_boot must be at least 100");
  if (opt.grid < 2) throw ValidationError("roc_band: grid needs at least 2 points");

  const auto g = group_scores(scores);
  const std::size_t n = scores.size();
  RocBand band;
  band.fpr.resize(opt.grid);
  for (std::size_t k = 0; k < opt.grid; ++k)
    band.fpr[k] = static_cast<double>(k) / static_cast<double>(opt.grid - 1);

  std::vector<std::vector<double>> tpr(opt.grid, std::vector<double>(opt.n_boot));
  std::vector<std::array<std::size_t, 2>> counts(g.n_groups);
  std::vector<double> row(opt.grid);
  for (std::size_t r = 0; r < opt.n_boot; ++r) {
    Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
    std::array<std::size_t, 2> sizes{};
    for (int attempt = 0;; ++attempt) {
      std::fill(counts.begin(), counts.end(), std::array<std::size_t, 2>{0, 0});
      sizes = {0, 0};
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = uniform_index(rng, n);
        ++counts[g.group_of[i]][labels[i]];
        ++sizes[labels[i]];
      }
      if (sizes[0] > 0 && sizes[1] > 0) break;
      if (attempt == 10)
        throw NumericError("roc_band: replicate " + std::to_string(r) +
                           " drew a single class 11 times; the evaluation set is too small");
    }
    step_on_grid(curve_from_groups(counts, sizes[0], sizes[1]), band.fpr, row);
    for (std::size_t k = 0; k < opt.grid; ++k) tpr[k][r] = row[k];
  }

  band.lower.resize(opt.grid);
  band.mean.resize(opt.grid);
  band.upper.resize(opt.grid);
  for (std::size_t k = 0; k < opt.grid; ++k) {
    band.mean[k] = std::accumulate(tpr[k].begin(), tpr[k].end(), 0.0) / static_cast<double>(opt.n_boot);
    const auto [lo, hi] = percentile_bounds(std::move(tpr[k]), opt.level);
    band.lower[k] = lo;
    band.upper[k] = hi;
    // a skewed replicate distribution can put the mean outside the percentiles;
    // this also absorbs summation rounding when every replicate agrees
    band.mean[k] = std::clamp(band.mean[k], lo, hi);
  }
  return band;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("percentile: q must be in [0,1]");
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, q);
}

std::optional<double> cohens_kappa(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ShapeError("cohens_kappa: length mismatch");
  if (a.empty()) throw ValidationError("cohens_kappa: empty answer vectors");
  std::array<std::size_t, 4> t{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw ValidationError("cohens_kappa: answers must be 0 or 1");
    ++t[2 * a[i] + b[i]];
  }
  return kappa_from_table(t);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::superior: return "superior";
    case Verdict::inferior: return "inferior";
    default: return "non-inferior";
  }
}

Verdict decide(double difference, double ci_low, double ci_high) {
  if (difference > 0.0 && ci_low > 0.0) return Verdict::superior;
  if (difference < 0.0 && ci_high < 0.0) return Verdict::inferior;
  return Verdict::non_inferior;
}

KappaComparison kappa_difference_ci(std::span<const std::uint8_t> model, std::span<const std::uint8_t> rater,
                                    std::span<const std::uint8_t> truth, const BootstrapOptions& opt) {
  if (model.size() != truth.size() || rater.size() != truth.size())
    throw ShapeError("kappa_difference_ci: model, rater and truth must cover the same images");
  if (opt.n_boot == 0) throw ValidationError("kappa_difference_ci: n_boot must be positive");
  const std::size_t n = truth.size();

  const auto km = cohens_kappa(model, truth);
  const auto kr = cohens_kappa(rater, truth);
  if (!km || !kr)
    throw NumericError("kappa_difference_ci: kappa undefined on the full set (constant answers and truth)");

  // each image is one of 8 (model, rater, truth) cells
  std::vector<std::uint8_t> cell(n);
  for (std::size_t i = 0; i < n; ++i) cell[i] = static_cast<std::uint8_t>(4 * model[i] + 2 * rater[i] + truth[i]);

  std::vector<double> diffs;
  diffs.reserve(opt.n_boot);
  std::size_t degenerate = 0;
  for (std::size_t r = 0; r < opt.n_boot; ++r) {
    Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
    std::array<std::size_t, 8> c{};
    for (std::size_t k = 0; k < n; ++k) ++c[cell[uniform_index(rng, n)]];
    std::array<std::size_t, 4> tm{}, tr{};
    for (std::size_t x = 0; x < 8; ++x) {
      const std::size_t m = x >> 2, a = (x >> 1) & 1, y = x & 1;
      tm[2 * m + y] += c[x];
      tr[2 * a + y] += c[x];
    }
    const auto bm = kappa_from_table(tm), br = kappa_from_table(tr);
    if (!bm || !br) {
      ++degenerate;
      continue;
    }
    diffs.push_back(*bm - *br);
  }
  if (10 * degenerate > opt.n_boot)
    throw NumericError("kappa_difference_ci: kappa undefined in " + std::to_string(degenerate) + " of " +
                       std::to_string(opt.n_boot) +
                       " bootstrap replicates; use a larger evaluation set");

  KappaComparison out;
  out.kappa_model = *km;
  out.kappa_rater = *kr;
  out.difference = *km - *kr;
  const auto [lo, hi] = percentile_bounds(std::move(diffs), opt.level);
  out.ci_low = lo;
  out.ci_high = hi;
  out.verdict = decide(out.difference, lo, hi);
  out.degenerate_replicates = degenerate;
  out.point_outside_ci = out.difference < lo || out.difference > hi;
  return out;
}

}  // namespace woundnet::eval
