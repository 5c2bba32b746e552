#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "woundnet/model.hpp"

namespace woundnet::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class StorageType { f64, f32 };

/// Everything besides the weights that inference needs.
struct CheckpointMeta {
  std::string model_version = "woundnet-0";
  std::vector<double> thresholds;  // per task; defaults to 0.5
  /// pixel = byte * pixel_scale, then (pixel - mean[c]) / std[c]
  double pixel_scale = 1.0 / 255.0;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
  nlohmann::json extra = nlohmann::json::object();  // training provenance
};

/// Layout: "WMTC", u32 version, u64 header length, UTF-8 JSON header, then
/// little-endian tensor blobs in parameter-index order. f64 storage is
/// bit-exact; f32 storage rounds every value to single precision.
void save_checkpoint(const WoundModel& model, const CheckpointMeta& meta, const std::filesystem::path& path,
                     StorageType storage = StorageType::f64);

struct LoadedCheckpoint {
  WoundModel model;
  CheckpointMeta meta;
};
/// Throws ValidationError on a bad magic, unknown version, missing or
/// misshapen parameters, or truncated data.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace woundnet::model
