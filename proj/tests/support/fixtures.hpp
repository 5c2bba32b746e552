#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "woundnet/metrics.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::testing {

// Kappa differences of the model minus seven medical raters, with 95% CIs,
// as reported; `starred` marks cells printed as significant.
struct KappaRow {
  const char* rater;
  const char* task;
  double difference, ci_low, ci_high;
  bool starred;
};

inline const std::vector<KappaRow>& reference_kappa_rows() {
  static const std::vector<KappaRow> rows{
      {"Attending A", "deep", -0.007, -0.117, 0.107, false},
      {"Attending A", "infected", 0.057, -0.045, 0.156, false},
      {"Attending A", "arterial", 0.062, -0.075, 0.194, false},
      {"Attending A", "venous", -0.162, -0.459, 0.130, false},
      {"Attending A", "pressure", -0.037, -0.192, 0.125, false},
      {"Attending B", "deep", 0.035, -0.070, 0.141, false},
      {"Attending B", "infected", 0.142, 0.033, 0.253, true},
      {"Attending B", "arterial", 0.177, 0.045, 0.313, true},
      {"Attending B", "venous", 0.032, -0.209, 0.266, false},
      {"Attending B", "pressure", 0.148, -0.008, 0.307, false},
      {"Resident A", "deep", 0.053, -0.053, 0.159, false},
      {"Resident A", "infected", 0.101, -0.026, 0.225, false},
      {"Resident A", "arterial", 0.051, -0.069, 0.167, false},
      {"Resident A", "venous", 0.186, -0.044, 0.403, false},
      {"Resident A", "pressure", -0.073, -0.191, 0.052, false},
      {"Resident B", "deep", 0.189, 0.085, 0.291, true},
      {"Resident B", "infected", 0.347, 0.242, 0.446, true},
      {"Resident B", "arterial", 0.328, 0.199, 0.456, true},
      {"Resident B", "venous", 0.408, 0.162, 0.632, true},
      {"Resident B", "pressure", 0.223, 0.036, 0.406, true},
      {"Nurse A", "deep", 0.126, 0.012, 0.247, true},
      {"Nurse A", "infected", 0.101, -0.018, 0.222, false},
      {"Nurse A", "arterial", 0.093, -0.008, 0.189, false},
      {"Nurse A", "venous", 0.037, -0.216, 0.296, false},
      {"Nurse A", "pressure", 0.101, -0.018, 0.219, false},
      {"Nurse B", "deep", 0.07, -0.047, 0.186, false},
      {"Nurse B", "infected", 0.204, 0.080, 0.332, true},
      {"Nurse B", "arterial", 0.024, -0.083, 0.132, false},
      {"Nurse B", "venous", 0.200, -0.037, 0.431, false},
      {"Nurse B", "pressure", -0.048, -0.190, 0.087, false},
      {"Nurse C", "deep", 0.232, 0.139, 0.322, true},
      {"Nurse C", "infected", 0.249, 0.120, 0.376, true},
      {"Nurse C", "arterial", 0.060, -0.045, 0.165, false},
      {"Nurse C", "venous", 0.269, 0.073, 0.456, true},
      {"Nurse C", "pressure", 0.06, -0.096, 0.221, false},
  };
  return rows;
}

struct VerdictTally {
  std::size_t superior = 0, non_inferior = 0, inferior = 0, star_mismatches = 0;
};

inline VerdictTally replay_reference_kappa_rows() {
  VerdictTally t;
  for (const auto& r : reference_kappa_rows()) {
    const auto v = eval::decide(r.difference, r.ci_low, r.ci_high);
    if (v == eval::Verdict::superior) ++t.superior;
    if (v == eval::Verdict::inferior) ++t.inferior;
    if (v == eval::Verdict::non_inferior) ++t.non_inferior;
    if ((v != eval::Verdict::non_inferior) != r.starred) ++t.star_mismatches;
  }
  return t;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Negatives ~ N(0,1), positives ~ N(mu,1).
inline double binormal_tpr(double fpr, double mu) {
  if (fpr <= 0.0) return 0.0;
  if (fpr >= 1.0) return 1.0;
  return normal_cdf(mu - normal_quantile(1.0 - fpr));
}

struct CoverageResult {
  std::size_t covered = 0, total = 0;
  double rate() const { return static_cast<double>(covered) / static_cast<double>(total); }
};

// Fraction of (trial, grid point) pairs whose band contains the analytic curve.
inline CoverageResult roc_band_coverage(std::size_t trials, std::size_t n_pos, std::size_t n_neg, double mu,
                                        std::size_t n_boot, std::uint64_t seed) {
  CoverageResult res;
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < n_pos; ++i) s.push_back(mu + z(rng)), y.push_back(1);
    for (std::size_t i = 0; i < n_neg; ++i) s.push_back(z(rng)), y.push_back(0);
    eval::RocBandOptions opt;
    opt.n_boot = n_boot;
    opt.seed = rng();
    const auto band = eval::roc_band(s, y, opt);
    for (std::size_t k = 0; k < band.fpr.size(); ++k) {
      const double truth = binormal_tpr(band.fpr[k], mu);
      res.covered += band.lower[k] <= truth && truth <= band.upper[k];
      ++res.total;
    }
  }
  return res;
}

// Population kappa against truth of a rater that flips each label with
// probability `err`, independently of everything else.
inline double flip_rater_kappa(double prevalence, double err) {
  const double q = prevalence * (1.0 - err) + (1.0 - prevalence) * err;
  const double po = 1.0 - err;
  const double pe = prevalence * q + (1.0 - prevalence) * (1.0 - q);
  return (po - pe) / (1.0 - pe);
}

inline CoverageResult kappa_ci_coverage(std::size_t trials, std::size_t n, double prevalence, double model_err,
                                        double rater_err, std::size_t n_boot, std::uint64_t seed) {
  CoverageResult res;
  const double truth_diff = flip_rater_kappa(prevalence, model_err) - flip_rater_kappa(prevalence, rater_err);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    std::vector<std::uint8_t> y(n), m(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform01(rng) < prevalence;
      m[i] = y[i] ^ static_cast<std::uint8_t>(uniform01(rng) < model_err);
      r[i] = y[i] ^ static_cast<std::uint8_t>(uniform01(rng) < rater_err);
    }
    eval::BootstrapOptions opt;
    opt.n_boot = n_boot;
    opt.seed = rng();
    const auto c = eval::kappa_difference_ci(m, r, y, opt);
    res.covered += c.ci_low <= truth_diff && truth_diff <= c.ci_high;
    ++res.total;
  }
  return res;
}

}  // namespace woundnet::testing
