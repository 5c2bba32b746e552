#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "woundnet/augment.hpp"
#include "woundnet/checkpoint.hpp"
#include "woundnet/manifest.hpp"
#include "woundnet/model.hpp"

namespace woundnet::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  std::string lr_schedule = "constant";  // or "cosine"
  bool augment = true;
  data::AugmentConfig augmentation;
  bool class_weights = true;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  std::vector<nlohmann::json> log;  // one object per epoch
  std::size_t best_epoch = 0;
  std::optional<double> best_mean_val_auc;
  std::filesystem::path checkpoint;
  std::filesystem::path log_path;
};

/// Trains from scratch and writes `model.wmtc` (the epoch with the best mean
/// validation AUC; tasks whose validation AUC is undefined are left out of the
/// mean) and `train_log.jsonl` into `out_dir`. The log holds no timings, so two
/// runs with the same seed produce identical files. A non-finite loss or
/// gradient aborts with a NumericError naming the epoch and batch.
TrainResult train_model(const model::ModelConfig& model_config, const TrainConfig& config,
                        const data::DatasetManifest& train_split, const data::DatasetManifest& val_split,
                        const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

}  // namespace woundnet::train
