#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "woundnet/checkpoint.hpp"
#include "woundnet/image.hpp"
#include "woundnet/manifest.hpp"
#include "woundnet/reports.hpp"

namespace woundnet::infer {

using eval::TaskProbabilities;

/// The single preprocessing path shared by training, evaluation and the
/// service: center crop, bilinear resize, byte scaling, per-channel
/// normalization from the checkpoint.
NdArray prepare(const data::Image& image, std::size_t size, const model::CheckpointMeta& meta);

/// Preprocessed images of a manifest, in manifest order.
struct LoadedSplit {
  std::vector<std::string> image_ids;
  std::vector<NdArray> images;  // [3,S,S] each
  std::vector<data::LabelVector> labels;
  std::size_t size() const { return images.size(); }
};
LoadedSplit load_split(const data::DatasetManifest& manifest, std::size_t size, const model::CheckpointMeta& meta);

/// Eval-mode probabilities, `batch` images per forward pass.
std::vector<TaskProbabilities> predict(const model::WoundModel& model, const std::vector<NdArray>& images,
                                       std::size_t batch = 32);

struct Evaluation {
  eval::ProbabilityTable probabilities;
  eval::Table2Report report;
};
/// Throws ValidationError when the checkpoint's tasks differ from the manifest columns.
Evaluation evaluate_model(const model::LoadedCheckpoint& checkpoint, const data::DatasetManifest& manifest,
                          std::span<const double> thresholds = {});

}  // namespace woundnet::infer
