#include "woundnet/reports.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "woundnet/errors.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::eval {
namespace {

using data::task_columns;

std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Reads a CSV keyed by image_id with the five task columns; `cell` parses one value.
template <class Row, class Cell>
void read_task_csv(const std::filesystem::path& path, Cell cell,
                   const std::function<void(const std::string&, const Row&)>& sink) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  const auto header = split_line(line);
  std::array<std::size_t, kNumTasks + 1> col{};
  for (std::size_t k = 0; k <= kNumTasks; ++k) {
    const std::string name = k == 0 ? "image_id" : task_columns()[k - 1];
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(path.string() + ": missing column '" + name + "'");
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  std::set<std::string> seen;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_line(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (f.size() != header.size()) throw ValidationError(where + ": wrong number of fields");
    if (!seen.insert(f[col[0]]).second) throw ValidationError(where + ": duplicate image_id '" + f[col[0]] + "'");
    Row r{};
    for (std::size_t t = 0; t < kNumTasks; ++t) r[t] = cell(f[col[t + 1]], where + ", column '" + task_columns()[t] + "'");
    sink(f[col[0]], r);
  }
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

nlohmann::json optional_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string format_metric(std::optional<double> v) { return v ? fixed3(*v) : "NA"; }

void save_probabilities(const ProbabilityTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "image_id";
  for (const auto& t : task_columns()) out << ',' << t;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
    out << table.image_ids[i];
    for (double p : table.probabilities[i]) {
      auto res = std::to_chars(buf, buf + sizeof(buf), p);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

ProbabilityTable load_probabilities(const std::filesystem::path& path) {
  ProbabilityTable t;
  auto cell = [](const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !(v >= 0.0 && v <= 1.0))
      throw ValidationError(where + ": '" + s + "' is not a probability");
    return v;
  };
  read_task_csv<TaskProbabilities>(path, cell, [&](const std::string& id, const TaskProbabilities& p) {
    t.image_ids.push_back(id);
    t.probabilities.push_back(p);
  });
  return t;
}

RaterRecord load_rater(const std::filesystem::path& path) {
  RaterRecord r;
  r.rater_id = path.stem().string();
  auto cell = [](const std::string& s, const std::string& where) -> std::uint8_t {
    if (s != "0" && s != "1") throw ValidationError(where + ": answer '" + s + "' is not 0 or 1");
    return s == "1";
  };
  read_task_csv<LabelVector>(path, cell, [&](const std::string& id, const LabelVector& l) { r.answers[id] = l; });
  return r;
}

void save_rater(const RaterRecord& rater, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "image_id";
  for (const auto& t : task_columns()) out << ',' << t;
  out << '\n';
  for (const auto& [id, l] : rater.answers) {
    out << id;
    for (auto v : l) out << ',' << static_cast<int>(v);
    out << '\n';
  }
}

data::DatasetManifest stratified_subsample(const data::DatasetManifest& manifest, std::size_t n,
                                           std::uint64_t seed) {
  const std::size_t total = manifest.size();
  if (n > total)
    throw ValidationError("stratified_subsample: asked for " + std::to_string(n) + " of " +
                          std::to_string(total) + " samples");
  std::map<unsigned, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < total; ++i) {
    unsigned key = 0;
    for (std::size_t t = 0; t < kNumTasks; ++t) key |= static_cast<unsigned>(manifest.samples[i].labels[t]) << t;
    strata[key].push_back(i);
  }
  if (n < strata.size())
    throw ValidationError("stratified_subsample: n=" + std::to_string(n) + " is smaller than the " +
                          std::to_string(strata.size()) + " nonempty label strata");

  std::vector<std::size_t> quota;
  std::vector<double> rem;
  std::size_t assigned = 0;
  for (const auto& [key, members] : strata) {
    const double exact = static_cast<double>(n) * static_cast<double>(members.size()) / static_cast<double>(total);
    quota.push_back(static_cast<std::size_t>(exact));
    rem.push_back(exact - static_cast<double>(quota.back()));
    assigned += quota.back();
  }
  std::vector<std::size_t> order(quota.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[order[i]];

  std::vector<bool> keep(total, false);
  std::size_t s = 0;
  for (auto& [key, members] : strata) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(key)));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < quota[s]; ++k) keep[members[k]] = true;
    ++s;
  }
  data::DatasetManifest out;
  out.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < total; ++i)
    if (keep[i]) out.samples.push_back(manifest.samples[i]);
  return out;
}

Table2Report metrics_report(const std::vector<TaskProbabilities>& probabilities, const std::vector<LabelVector>& truth,
                            const std::array<double, kNumTasks>& thresholds) {
  if (probabilities.size() != truth.size()) throw ShapeError("metrics_report: probabilities and labels differ in length");
  Table2Report report;
  std::vector<double> scores(truth.size());
  std::vector<std::uint8_t> labels(truth.size());
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probabilities[i][t];
      labels[i] = truth[i][t];
    }
    TaskMetrics row;
    row.task = task_columns()[t];
    row.threshold = thresholds[t];
    row.counts = confusion(scores, labels, thresholds[t]);
    row.metrics = basic_metrics(row.counts);
    if (row.counts.tp + row.counts.fn > 0 && row.counts.tn + row.counts.fp > 0) row.auc = auc(scores, labels);
    report.rows.push_back(row);
  }
  return report;
}

std::string Table2Report::to_text() const {
  std::ostringstream out;
  out << pad("task", 10) << pad("accuracy", 10) << pad("sensitivity", 13) << pad("specificity", 13) << "AUC\n";
  for (const auto& r : rows)
    out << pad(r.task, 10) << pad(format_metric(r.metrics.accuracy), 10) << pad(format_metric(r.metrics.sensitivity), 13)
        << pad(format_metric(r.metrics.specificity), 13) << format_metric(r.auc) << '\n';
  return out.str();
}

nlohmann::json Table2Report::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"task", r.task},
                 {"threshold", r.threshold},
                 {"accuracy", optional_json(r.metrics.accuracy)},
                 {"sensitivity", optional_json(r.metrics.sensitivity)},
                 {"specificity", optional_json(r.metrics.specificity)},
                 {"auc", optional_json(r.auc)},
                 {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}}});
  return {{"tasks", j}};
}

Table3Report compare_report(const ProbabilityTable& model, const std::map<std::string, LabelVector>& truth,
                            const std::vector<RaterRecord>& raters, const std::array<double, kNumTasks>& thresholds,
                            const BootstrapOptions& options) {
  if (raters.empty()) throw ValidationError("compare: no rater files given");
  std::map<std::string, std::size_t> model_row;
  for (std::size_t i = 0; i < model.image_ids.size(); ++i) model_row[model.image_ids[i]] = i;

  std::vector<std::string> ids;
  for (const auto& [id, _] : raters.front().answers) ids.push_back(id);
  for (const auto& id : ids) {
    if (!truth.count(id)) throw ValidationError("compare: image '" + id + "' is not in the manifest");
    if (!model_row.count(id)) throw ValidationError("compare: no model probabilities for image '" + id + "'");
  }

  Table3Report report;
  std::vector<std::uint8_t> m(ids.size()), r(ids.size()), y(ids.size());
  for (const auto& rater : raters) {
    if (rater.answers.size() != ids.size())
      throw ValidationError("compare: rater '" + rater.rater_id + "' answered " + std::to_string(rater.answers.size()) +
                            " images, expected " + std::to_string(ids.size()));
    Table3Entry entry;
    entry.rater_id = rater.rater_id;
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = rater.answers.find(ids[i]);
        if (it == rater.answers.end())
          throw ValidationError("compare: rater '" + rater.rater_id + "' has no answer for image '" + ids[i] + "'");
        r[i] = it->second[t];
        y[i] = truth.at(ids[i])[t];
        m[i] = model.probabilities[model_row.at(ids[i])][t] >= thresholds[t];
      }
      BootstrapOptions o = options;
      o.seed = derive_seed(options.seed, rater.rater_id + "/" + task_columns()[t]);
      entry.tasks[t] = kappa_difference_ci(m, r, y, o);
    }
    report.raters.push_back(std::move(entry));
  }
  return report;
}

std::string Table3Report::to_text() const {
  std::ostringstream out;
  out << pad("rater", 14) << pad("", 12);
  for (const auto& t : task_columns()) out << pad(t, 18);
  out << "\n";
  for (const auto& e : raters) {
    out << pad(e.rater_id, 14) << pad("difference", 12);
    for (const auto& c : e.tasks) out << pad(fixed3(c.difference) + (c.verdict == Verdict::non_inferior ? "" : "*"), 18);
    out << "\n" << pad("", 14) << pad("95% CI", 12);
    for (const auto& c : e.tasks) out << pad("[" + fixed3(c.ci_low) + "," + fixed3(c.ci_high) + "]", 18);
    out << "\n";
  }
  out << "* significant difference (CI excludes zero)\n";
  return out.str();
}

nlohmann::json Table3Report::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : raters) {
    nlohmann::json tasks;
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      const auto& c = e.tasks[t];
      tasks[task_columns()[t]] = {{"kappa_model", c.kappa_model}, {"kappa_rater", c.kappa_rater},
                                  {"difference", c.difference},   {"ci_low", c.ci_low},
                                  {"ci_high", c.ci_high},         {"verdict", to_string(c.verdict)}};
    }
    j.push_back({{"rater", e.rater_id}, {"tasks", tasks}});
  }
  return {{"raters", j}};
}

}  // namespace woundnet::eval
