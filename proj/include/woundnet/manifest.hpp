#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace woundnet::data {

inline constexpr std::size_t kNumTasks = 5;
using LabelVector = std::array<std::uint8_t, kNumTasks>;

/// Column order of the five binary tasks in every CSV.
const std::array<std::string, kNumTasks>& task_columns();

struct WoundSample {
  std::string image_id;
  std::string patient_id;
  std::string image_path;  // relative to the manifest directory unless absolute
  LabelVector labels{};
};

struct DatasetManifest {
  std::vector<WoundSample> samples;
  std::filesystem::path base_dir;

  std::size_t size() const { return samples.size(); }
  std::array<std::size_t, kNumTasks> positive_counts() const;
  std::vector<std::string> patients() const;  // sorted, unique
  std::filesystem::path resolve(const WoundSample& s) const;
};

class ManifestError : public std::runtime_error {
 public:
  enum class Kind { missing_column, duplicate_image_id, bad_label, empty_field, bad_row, io };
  ManifestError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Reads `image_id,patient_id,image_path,deep,infected,arterial,venous,pressure`.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.685;
  double val = 0.115;
  double test = 0.20;
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  DatasetManifest train, val, test;
};

/// Patient counts per split by largest-remainder rounding of the fractions.
/// Throws ValidationError when a positive fraction would get zero patients.
std::array<std::size_t, 3> allocate_patients(std::size_t num_patients, const SplitSpec& spec);

/// Seeded shuffle of the sorted patient list, then contiguous allocation into
/// train/val/test. Every patient's images land in exactly one split; samples
/// keep their manifest order within a split.
DatasetSplits split_by_patient(const DatasetManifest& manifest, const SplitSpec& spec);

}  // namespace woundnet::data
