#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "woundnet/image.hpp"
#include "woundnet/manifest.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::data {

inline constexpr const char* kSynthGeneratorVersion = "woundnet-synth/1";

/// Per-task positive rates of the clinical dataset the generator mimics:
/// deep 64.7 %, infected 59.9 %, arterial 21.1 %, venous 2.4 %, pressure 12.4 %.
inline constexpr std::array<double, kNumTasks> kDefaultPrevalence{0.647, 0.599, 0.211, 0.024, 0.124};

struct SynthConfig {
  std::size_t n_patients = 1429;
  /// P(k+1 images) for a patient; mean about 1.5 images per patient.
  std::vector<double> images_per_patient{0.62, 0.28, 0.07, 0.03};
  /// When set, overrides the distribution: every patient gets one image and
  /// the remainder is spread over uniformly drawn patients.
  std::optional<std::size_t> total_images;
  std::array<double, kNumTasks> prevalence = kDefaultPrevalence;
  /// Blend strength of the visual signatures in (0,1].
  double signature_strength = 1.0;
  /// Per-pixel Gaussian noise standard deviation.
  double noise = 0.03;
  std::size_t width = 80;
  std::size_t height = 72;
  ImageFormat format = ImageFormat::ppm;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Skin-toned background with an elliptical wound; each positive label adds
/// its signature: deep -> dark core, infected -> yellow-green speckle,
/// arterial -> pale rim, venous -> blue-purple skin hue, pressure -> concentric
/// pink bands.
Image render_wound(const LabelVector& labels, const SynthConfig& config, Rng& rng);

struct SynthResult {
  DatasetManifest manifest;
  std::array<std::size_t, kNumTasks> positive_counts{};
  std::size_t n_images = 0;
};

/// Writes images/<id>.{ppm,png}, manifest.csv and provenance.json into
/// `out_dir`. Byte-identical output for a fixed config.
SynthResult generate_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace woundnet::data
