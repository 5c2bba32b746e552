#include "woundnet/inference.hpp"

#include <algorithm>

#include "woundnet/errors.hpp"

namespace woundnet::infer {

NdArray prepare(const data::Image& image, std::size_t size, const model::CheckpointMeta& meta) {
  NdArray x = data::preprocess(image, size);
  const bool identity = meta.pixel_scale == 1.0 / 255.0 && meta.mean == std::array<double, 3>{0, 0, 0} &&
                        meta.std == std::array<double, 3>{1, 1, 1};
  if (identity) return x;
  const double rescale = meta.pixel_scale * 255.0;
  const std::size_t plane = size * size;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      double& v = x[c * plane + i];
      v = (v * rescale - meta.mean[c]) / meta.std[c];
    }
  return x;
}

LoadedSplit load_split(const data::DatasetManifest& manifest, std::size_t size, const model::CheckpointMeta& meta) {
  LoadedSplit out;
  out.image_ids.reserve(manifest.size());
  out.images.reserve(manifest.size());
  out.labels.reserve(manifest.size());
  for (const auto& s : manifest.samples) {
    data::Image img;
    try {
      img = data::read_image(manifest.resolve(s));
    } catch (const std::exception& e) {
      throw ValidationError("image '" + s.image_id + "': " + e.what());
    }
    out.image_ids.push_back(s.image_id);
    out.images.push_back(prepare(img, size, meta));
    out.labels.push_back(s.labels);
  }
  return out;
}

std::vector<TaskProbabilities> predict(const model::WoundModel& model, const std::vector<NdArray>& images,
                                       std::size_t batch) {
  if (model.config().num_tasks != eval::kNumTasks)
    throw ValidationError("predict: model has " + std::to_string(model.config().num_tasks) + " tasks, expected 5");
  std::vector<TaskProbabilities> out;
  out.reserve(images.size());
  std::vector<const NdArray*> chunk;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    chunk.clear();
    for (std::size_t i = start; i < std::min(images.size(), start + batch); ++i) chunk.push_back(&images[i]);
    const NdArray p = model.predict_proba(data::stack(chunk));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      TaskProbabilities row;
      for (std::size_t t = 0; t < eval::kNumTasks; ++t) row[t] = p[r * eval::kNumTasks + t];
      out.push_back(row);
    }
  }
  return out;
}

Evaluation evaluate_model(const model::LoadedCheckpoint& ckpt, const data::DatasetManifest& manifest,
                          std::span<const double> thresholds) {
  const auto& names = ckpt.model.config().task_names;
  if (!std::equal(names.begin(), names.end(), data::task_columns().begin(), data::task_columns().end()))
    throw ValidationError("checkpoint tasks do not match the manifest task columns");
  std::array<double, eval::kNumTasks> th{};
  const auto& source = thresholds.empty() ? std::span<const double>(ckpt.meta.thresholds) : thresholds;
  if (source.size() != eval::kNumTasks) throw ValidationError("evaluate: expected 5 thresholds");
  std::copy(source.begin(), source.end(), th.begin());

  const auto split = load_split(manifest, ckpt.model.config().input_size, ckpt.meta);
  Evaluation ev;
  ev.probabilities.image_ids = split.image_ids;
  ev.probabilities.probabilities = predict(ckpt.model, split.images);
  ev.report = eval::metrics_report(ev.probabilities.probabilities, split.labels, th);
  return ev;
}

}  // namespace woundnet::infer
