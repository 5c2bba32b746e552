#include "woundnet/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "woundnet/errors.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::data {
namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const std::array<std::string, kNumTasks>& task_columns() {
  static const std::array<std::string, kNumTasks> cols{"deep", "infected", "arterial", "venous",
                                                       "pressure"};
  return cols;
}

std::array<std::size_t, kNumTasks> DatasetManifest::positive_counts() const {
  std::array<std::size_t, kNumTasks> out{};
  for (const auto& s : samples)
    for (std::size_t t = 0; t < kNumTasks; ++t) out[t] += s.labels[t];
  return out;
}

std::vector<std::string> DatasetManifest::patients() const {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.patient_id);
  return {ids.begin(), ids.end()};
}

std::filesystem::path DatasetManifest::resolve(const WoundSample& s) const {
  std::filesystem::path p(s.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError(ManifestError::Kind::io, "cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ManifestError(ManifestError::Kind::missing_column, path.string() + ": empty file, no header");

  const auto header = split_csv_line(line);
  std::vector<std::string> required{"image_id", "patient_id", "image_path"};
  required.insert(required.end(), task_columns().begin(), task_columns().end());
  std::vector<std::size_t> col(required.size());
  for (std::size_t k = 0; k < required.size(); ++k) {
    auto it = std::find(header.begin(), header.end(), required[k]);
    if (it == header.end())
      throw ManifestError(ManifestError::Kind::missing_column,
                          path.string() + ": missing column '" + required[k] + "'");
    col[k] = static_cast<std::size_t>(it - header.begin());
  }

  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::unordered_set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (f.size() != header.size())
      throw ManifestError(ManifestError::Kind::bad_row, where + ": expected " +
                                                            std::to_string(header.size()) +
                                                            " fields, got " + std::to_string(f.size()));
    WoundSample s;
    s.image_id = f[col[0]];
    s.patient_id = f[col[1]];
    s.image_path = f[col[2]];
    for (std::size_t k = 0; k < 3; ++k)
      if (f[col[k]].empty())
        throw ManifestError(ManifestError::Kind::empty_field, where + ": empty " + required[k]);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      const std::string& v = f[col[3 + t]];
      if (v != "0" && v != "1")
        throw ManifestError(ManifestError::Kind::bad_label, where + ", column '" + task_columns()[t] +
                                                                "': label '" + v + "' is not 0 or 1");
      s.labels[t] = v == "1" ? 1 : 0;
    }
    if (!seen.insert(s.image_id).second)
      throw ManifestError(ManifestError::Kind::duplicate_image_id,
                          where + ": duplicate image_id '" + s.image_id + "'");
    m.samples.push_back(std::move(s));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "image_id,patient_id,image_path";
  for (const auto& t : task_columns()) out << ',' << t;
  out << '\n';
  // relative paths are rewritten against the new manifest location
  namespace fs = std::filesystem;
  const fs::path dest_dir = fs::absolute(path).parent_path().lexically_normal();
  const bool rebase = !manifest.base_dir.empty() && fs::absolute(manifest.base_dir).lexically_normal() != dest_dir;
  for (const auto& s : manifest.samples) {
    std::string image_path = s.image_path;
    if (rebase && !fs::path(s.image_path).is_absolute()) {
      const fs::path target = fs::absolute(manifest.resolve(s)).lexically_normal();
      const fs::path rel = target.lexically_relative(dest_dir);
      image_path = (rel.empty() ? target : rel).generic_string();
    }
    out << s.image_id << ',' << s.patient_id << ',' << image_path;
    for (auto l : s.labels) out << ',' << static_cast<int>(l);
    out << '\n';
  }
}

std::array<std::size_t, 3> allocate_patients(std::size_t n, const SplitSpec& spec) {
  const std::array<double, 3> frac{spec.train, spec.val, spec.test};
  double total = 0.0;
  for (double f : frac) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("split fractions sum to " + std::to_string(total) + ", expected 1");
  if (n < 3) throw ValidationError("patient split needs at least 3 patients, got " + std::to_string(n));

  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = frac[k] * static_cast<double>(n);
    count[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(count[k]);
    assigned += count[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[order[i % 3]];

  static const char* names[3] = {"train", "val", "test"};
  for (std::size_t k = 0; k < 3; ++k)
    if (frac[k] > 0.0 && count[k] == 0)
      throw ValidationError(std::string("split fraction for ") + names[k] + " (" +
                            std::to_string(frac[k]) + ") rounds to zero of " + std::to_string(n) +
                            " patients");
  return count;
}

DatasetSplits split_by_patient(const DatasetManifest& manifest, const SplitSpec& spec) {
  std::vector<std::string> patients = manifest.patients();
  const auto count = allocate_patients(patients.size(), spec);
  Rng rng(spec.seed);
  std::shuffle(patients.begin(), patients.end(), rng);

  std::unordered_map<std::string, int> where;
  std::size_t i = 0;
  for (int k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < count[k]; ++c) where[patients[i++]] = k;

  DatasetSplits out;
  for (auto* m : {&out.train, &out.val, &out.test}) m->base_dir = manifest.base_dir;
  for (const auto& s : manifest.samples) {
    switch (where.at(s.patient_id)) {
      case 0: out.train.samples.push_back(s); break;
      case 1: out.val.samples.push_back(s); break;
      default: out.test.samples.push_back(s); break;
    }
  }
  return out;
}

}  // namespace woundnet::data
