#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "support/fixtures.hpp"
#include "woundnet/errors.hpp"
#include "woundnet/metrics.hpp"
#include "woundnet/reports.hpp"

using namespace woundnet;
using namespace woundnet::eval;
namespace fs = std::filesystem;

namespace {

using Labels = std::vector<std::uint8_t>;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("woundnet_test_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// tp=40, fn=10, fp=5, tn=45 laid out as answer vectors
void fixture_2x2(Labels& rater, Labels& truth) {
  rater.clear();
  truth.clear();
  auto put = [&](std::size_t n, int a, int b) {
    for (std::size_t i = 0; i < n; ++i) rater.push_back(a), truth.push_back(b);
  };
  put(40, 1, 1);
  put(10, 0, 1);
  put(5, 1, 0);
  put(45, 0, 0);
}

}  // namespace

TEST_CASE("basic metrics from a 2x2 table") {
  auto m = basic_metrics({40, 5, 45, 10});
  CHECK(*m.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(*m.sensitivity == doctest::Approx(0.80).epsilon(1e-15));
  CHECK(*m.specificity == doctest::Approx(0.90).epsilon(1e-15));

  auto all = basic_metrics({7, 0, 3, 0});
  CHECK(*all.accuracy == 1.0);
  CHECK(*all.sensitivity == 1.0);
  CHECK(*all.specificity == 1.0);

  auto no_pos = basic_metrics({0, 2, 8, 0});
  CHECK_FALSE(no_pos.sensitivity.has_value());
  CHECK(*no_pos.accuracy == 0.8);
  CHECK(format_metric(no_pos.sensitivity) == "NA");
}

TEST_CASE("confusion at threshold 0 predicts everything positive") {
  std::vector<double> s{0.0, 0.2, 0.9, 0.4};
  Labels y{0, 1, 1, 0};
  auto c = confusion(s, y, 0.0);
  CHECK(c.tp == 2);
  CHECK(c.fp == 2);
  CHECK(c.tn + c.fn == 0);
}

TEST_CASE("auc fixtures") {
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, Labels{0, 0, 1, 1}) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, Labels{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>(6, 0.3), Labels{0, 1, 0, 1, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, Labels{1, 1}), ValidationError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, Labels{1, 2}), ValidationError);
}

TEST_CASE("auc equals pairwise counting and the trapezoid on 1000 random instances") {
  Rng rng(2718);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 300);
    const double grain = trial % 2 ? 0.05 : 0.0;  // half the instances carry heavy ties
    std::vector<double> s(n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform01(rng) < 0.3;
      s[i] = uniform01(rng) + 0.3 * y[i];
      if (grain > 0) s[i] = std::round(s[i] / grain) * grain;
    }
    y[0] = 0;
    y[1] = 1;
    const double oracle = auc_pairwise(s, y);
    worst = std::max({worst, std::abs(auc(s, y) - oracle), std::abs(roc_curve(s, y).auc - oracle)});
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("roc curve shape") {
  auto two = roc_curve(std::vector<double>{0.9, 0.1}, Labels{1, 0});
  REQUIRE(two.points.size() == 3);
  CHECK(two.points[1].fpr == 0.0);
  CHECK(two.points[1].tpr == 1.0);
  CHECK(two.points[2].fpr == 1.0);

  auto anti = roc_curve(std::vector<double>{0.1, 0.2, 0.8, 0.9}, Labels{1, 1, 0, 0});
  CHECK(anti.auc == 0.0);
  for (const auto& p : anti.points) CHECK((p.tpr == 0.0 || p.fpr == 1.0));

  // three distinct scores -> three thresholds plus the origin
  auto tied = roc_curve(std::vector<double>{0.5, 0.5, 0.7, 0.2, 0.5}, Labels{1, 0, 1, 0, 1});
  CHECK(tied.points.size() == 4);
  for (std::size_t i = 1; i < tied.points.size(); ++i) {
    CHECK(tied.points[i].fpr >= tied.points[i - 1].fpr);
    CHECK(tied.points[i].tpr >= tied.points[i - 1].tpr);
  }
  CHECK(step_tpr(tied, 0.49) == doctest::Approx(1.0 / 3.0));
  CHECK(step_tpr(tied, 0.5) == 1.0);
}

TEST_CASE("roc band: degenerate two-sample set has zero width") {
  RocBandOptions opt;
  opt.n_boot = 100;
  auto band = roc_band(std::vector<double>{0.9, 0.1}, Labels{1, 0}, opt);
  for (std::size_t k = 0; k < band.fpr.size(); ++k) {
    CHECK(band.lower[k] == band.upper[k]);
    CHECK(band.mean[k] == band.lower[k]);
  }
}

TEST_CASE("roc band: perfect classifier pinned at 1") {
  std::vector<double> s;
  Labels y;
  for (int i = 0; i < 40; ++i) s.push_back(i < 15 ? 0.6 + i * 0.01 : i * 0.01), y.push_back(i < 15);
  RocBandOptions opt;
  opt.n_boot = 300;
  auto band = roc_band(s, y, opt);
  for (std::size_t k = 1; k < band.fpr.size(); ++k) {
    CHECK(band.lower[k] == 1.0);
    CHECK(band.mean[k] == 1.0);
  }
}

TEST_CASE("roc band: ordering, monotone mean, reproducible") {
  Rng rng(8);
  std::normal_distribution<double> z;
  std::vector<double> s;
  Labels y;
  for (int i = 0; i < 120; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(z(rng) + y.back());
  }
  RocBandOptions opt;
  opt.n_boot = 500;
  opt.seed = 11;
  auto a = roc_band(s, y, opt), b = roc_band(s, y, opt);
  for (std::size_t k = 0; k < a.fpr.size(); ++k) {
    CHECK(a.lower[k] <= a.mean[k]);
    CHECK(a.mean[k] <= a.upper[k]);
    CHECK(a.lower[k] >= 0.0);
    CHECK(a.upper[k] <= 1.0);
    if (k) CHECK(a.mean[k] >= a.mean[k - 1]);
    CHECK(std::memcmp(&a.lower[k], &b.lower[k], sizeof(double)) == 0);
    CHECK(std::memcmp(&a.upper[k], &b.upper[k], sizeof(double)) == 0);
  }
  opt.n_boot = 50;
  CHECK_THROWS_AS(roc_band(s, y, opt), ValidationError);
}

TEST_CASE("percentile uses linear interpolation between order statistics") {
  CHECK(percentile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(percentile({5}, 0.975) == 5);
  CHECK(percentile({0, 10}, 0.025) == doctest::Approx(0.25));
}

TEST_CASE("kappa fixtures and properties") {
  Labels rater, truth;
  fixture_2x2(rater, truth);
  CHECK(*cohens_kappa(rater, truth) == doctest::Approx(0.70).epsilon(1e-12));
  CHECK(*cohens_kappa(truth, rater) == *cohens_kappa(rater, truth));
  CHECK(*cohens_kappa(truth, truth) == 1.0);

  Labels fr = rater, ft = truth;
  for (auto& v : fr) v ^= 1;
  for (auto& v : ft) v ^= 1;
  CHECK(*cohens_kappa(fr, ft) == doctest::Approx(0.70).epsilon(1e-12));

  CHECK_FALSE(cohens_kappa(Labels{1, 1, 1}, Labels{1, 1, 1}).has_value());
  // one constant rater against a varying one is defined and zero
  CHECK(*cohens_kappa(Labels{0, 0, 0, 0}, Labels{0, 1, 0, 1}) == 0.0);
  CHECK_THROWS_AS(cohens_kappa(Labels{0, 1}, Labels{0}), ShapeError);
}

TEST_CASE("kappa of independent coin raters vanishes") {
  Rng rng(6);
  Labels a(10000), b(10000);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = uniform01(rng) < 0.5, b[i] = uniform01(rng) < 0.3;
  CHECK(std::abs(*cohens_kappa(a, b)) < 0.1);
}

TEST_CASE("kappa difference: identical answers give a zero difference") {
  Labels rater, truth;
  fixture_2x2(rater, truth);
  BootstrapOptions opt;
  opt.n_boot = 500;
  auto c = kappa_difference_ci(rater, rater, truth, opt);
  CHECK(c.difference == 0.0);
  CHECK(c.ci_low == 0.0);
  CHECK(c.ci_high == 0.0);
  CHECK(c.verdict == Verdict::non_inferior);
}

TEST_CASE("kappa difference: reproducible and paired") {
  Rng rng(12);
  Labels y(300), m(300), r(300);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = uniform01(rng) < 0.4;
    m[i] = y[i] ^ (uniform01(rng) < 0.1);
    r[i] = y[i] ^ (uniform01(rng) < 0.3);
  }
  BootstrapOptions opt;
  opt.n_boot = 1000;
  opt.seed = 4;
  auto a = kappa_difference_ci(m, r, y, opt), b = kappa_difference_ci(m, r, y, opt);
  CHECK(std::memcmp(&a.ci_low, &b.ci_low, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.ci_high, &b.ci_high, sizeof(double)) == 0);
  CHECK(a.difference == doctest::Approx(*cohens_kappa(m, y) - *cohens_kappa(r, y)));
  CHECK(a.verdict == Verdict::superior);
  auto flipped = kappa_difference_ci(r, m, y, opt);
  CHECK(flipped.verdict == Verdict::inferior);
}

TEST_CASE("kappa difference: too many degenerate replicates is an error") {
  Labels y(30, 0);
  y[7] = 1;
  Labels m = y, r(30, 0);
  r[7] = 1;
  r[8] = 1;
  BootstrapOptions opt;
  opt.n_boot = 400;
  try {
    kappa_difference_ci(m, r, y, opt);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("larger evaluation set") != std::string::npos);
  }
}

TEST_CASE("decision rule on the reference kappa table") {
  CHECK(decide(0.189, 0.085, 0.291) == Verdict::superior);
  CHECK(decide(-0.007, -0.117, 0.107) == Verdict::non_inferior);
  CHECK(decide(-0.2, -0.3, -0.1) == Verdict::inferior);
  CHECK(decide(0.1, -0.05, 0.2) == Verdict::non_inferior);
  // CI above zero but point estimate not positive: flagged case, stays non-inferior
  CHECK(decide(0.0, 0.01, 0.2) == Verdict::non_inferior);

  const auto& rows = testing::reference_kappa_rows();
  CHECK(rows.size() == 35);
  for (const auto& r : rows) {
    INFO(r.rater << " / " << r.task);
    CHECK((decide(r.difference, r.ci_low, r.ci_high) == Verdict::superior) == r.starred);
  }
  const auto tally = testing::replay_reference_kappa_rows();
  CHECK(tally.star_mismatches == 0);
  CHECK(tally.superior == 12);
  CHECK(tally.inferior == 0);
  CHECK(tally.non_inferior == 23);
}

TEST_CASE("bi-normal helpers") {
  CHECK(testing::normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
  CHECK(testing::binormal_tpr(0.5, 0.0) == doctest::Approx(0.5));
  CHECK(testing::flip_rater_kappa(0.3, 0.0) == doctest::Approx(1.0));
  CHECK(testing::flip_rater_kappa(0.5, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("stratified subsample") {
  data::DatasetManifest m;
  for (int i = 0; i < 200; ++i) {
    data::WoundSample s;
    s.image_id = "i" + std::to_string(i);
    s.patient_id = "p" + std::to_string(i);
    s.labels = {static_cast<std::uint8_t>(i % 2), 0, 0, 0, 0};
    m.samples.push_back(s);
  }
  auto half = stratified_subsample(m, 100, 3);
  CHECK(half.size() == 100);
  CHECK(half.positive_counts()[0] == 50);

  auto all = stratified_subsample(m, 200, 3);
  for (std::size_t i = 0; i < 200; ++i) CHECK(all.samples[i].image_id == m.samples[i].image_id);
  CHECK_THROWS_AS(stratified_subsample(m, 1, 3), ValidationError);
  CHECK_THROWS_AS(stratified_subsample(m, 201, 3), ValidationError);
}

TEST_CASE("stratified subsample of a test-sized split keeps prevalences") {
  Rng rng(10);
  data::DatasetManifest m;
  const std::array<double, 5> prev{0.647, 0.599, 0.211, 0.024, 0.124};
  for (int i = 0; i < 430; ++i) {
    data::WoundSample s;
    s.image_id = "i" + std::to_string(i);
    s.patient_id = "p" + std::to_string(i);
    for (std::size_t t = 0; t < 5; ++t) s.labels[t] = uniform01(rng) < prev[t];
    m.samples.push_back(s);
  }
  auto sub = stratified_subsample(m, 350, 1);
  REQUIRE(sub.size() == 350);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(std::abs(sub.positive_counts()[t] / 350.0 - m.positive_counts()[t] / 430.0) <= 0.05);
}

TEST_CASE("probability and rater files round trip") {
  auto dir = scratch("files");
  ProbabilityTable p;
  p.image_ids = {"a", "b"};
  p.probabilities = {{0.1, 1.0 / 3.0, 0.0, 1.0, 0.123456789012345678}, {0.5, 0.5, 0.5, 0.5, 1e-300}};
  save_probabilities(p, dir / "probs.csv");
  auto back = load_probabilities(dir / "probs.csv");
  CHECK(back.image_ids == p.image_ids);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 5; ++t) CHECK(back.probabilities[i][t] == p.probabilities[i][t]);

  RaterRecord r{"nurse_x", {{"a", {1, 0, 0, 1, 0}}, {"b", {0, 0, 1, 0, 0}}}};
  save_rater(r, dir / "nurse_x.csv");
  auto rb = load_rater(dir / "nurse_x.csv");
  CHECK(rb.rater_id == "nurse_x");
  CHECK(rb.answers == r.answers);

  std::ofstream(dir / "bad.csv") << "image_id,deep,infected,arterial,venous,pressure\na,1,0,2,0,0\n";
  CHECK_THROWS_WITH_AS(load_rater(dir / "bad.csv"), doctest::Contains("arterial"), ValidationError);
}

TEST_CASE("metrics report: zero thresholds and JSON shape") {
  std::vector<TaskProbabilities> p{{0.9, 0.1, 0.2, 0.3, 0.4}, {0.2, 0.8, 0.7, 0.6, 0.1}, {0.6, 0.4, 0.3, 0.2, 0.9}};
  std::vector<LabelVector> y{{1, 0, 0, 0, 0}, {0, 1, 1, 0, 0}, {1, 0, 0, 1, 1}};
  auto rep = metrics_report(p, y, {0, 0, 0, 0, 0});
  for (const auto& row : rep.rows) {
    CHECK(*row.metrics.sensitivity == 1.0);
    CHECK(*row.metrics.specificity == 0.0);
  }
  auto j = rep.to_json();
  CHECK(j["tasks"].size() == 5);
  CHECK(j["tasks"][0]["task"] == "deep");
  CHECK(j["tasks"][0]["auc"] == 1.0);
  CHECK(rep.to_text().find("pressure") != std::string::npos);
}

TEST_CASE("compare report over two raters") {
  Rng rng(99);
  ProbabilityTable model;
  std::map<std::string, LabelVector> truth;
  RaterRecord good{"good", {}}, poor{"poor", {}};
  for (int i = 0; i < 200; ++i) {
    const std::string id = "img" + std::to_string(i);
    LabelVector y, g, q;
    TaskProbabilities pr;
    for (std::size_t t = 0; t < 5; ++t) {
      y[t] = uniform01(rng) < 0.4;
      pr[t] = y[t] ? uniform(rng, 0.4, 1.0) : uniform(rng, 0.0, 0.6);
      g[t] = y[t] ^ (uniform01(rng) < 0.05);
      q[t] = y[t] ^ (uniform01(rng) < 0.45);
    }
    model.image_ids.push_back(id);
    model.probabilities.push_back(pr);
    truth[id] = y;
    good.answers[id] = g;
    poor.answers[id] = q;
  }
  BootstrapOptions opt;
  opt.n_boot = 300;
  auto rep = compare_report(model, truth, {good, poor}, {0.5, 0.5, 0.5, 0.5, 0.5}, opt);
  REQUIRE(rep.raters.size() == 2);
  for (const auto& c : rep.raters[1].tasks) CHECK(c.verdict == Verdict::superior);
  auto j = rep.to_json();
  CHECK(j["raters"][1]["tasks"]["venous"]["verdict"] == "superior");
  CHECK(rep.to_text().find("*") != std::string::npos);

  RaterRecord partial{"partial", {{"img0", {0, 0, 0, 0, 0}}}};
  CHECK_THROWS_AS(compare_report(model, truth, {good, partial}, {0.5, 0.5, 0.5, 0.5, 0.5}, opt), ValidationError);
}

TEST_CASE("coverage of the kappa-difference interval (smoke, 40 trials)") {
  auto res = testing::kappa_ci_coverage(40, 350, 0.4, 0.1, 0.2, 500, 17);
  CHECK(res.rate() >= 0.8);
}

TEST_CASE("coverage of the ROC band (smoke, 20 trials)") {
  auto res = testing::roc_band_coverage(20, 150, 150, 1.2, 500, 23);
  CHECK(res.rate() >= 0.8);
}
