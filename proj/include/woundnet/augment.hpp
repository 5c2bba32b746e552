#pragma once

#include <cstdint>

#include "json.hpp"
#include "woundnet/ndarray.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::data {

struct AugmentConfig {
  double rotation_deg = 15.0;   // uniform in [-r, r]
  double translation = 0.1;     // fraction of side, per axis
  double scale_min = 0.9;
  double scale_max = 1.1;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double brightness = 0.2;      // additive, uniform in [-b, b]
  double contrast_min = 0.8;    // factor about the image mean
  double contrast_max = 1.25;
  std::uint64_t seed = 0;

  /// All transforms disabled.
  static AugmentConfig identity();
  void validate() const;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// One random label-preserving distortion of a [3,S,S] image in [0,1]:
/// affine warp (bilinear, border replication), flips, brightness, contrast,
/// clamp. Training-only; evaluation code never calls this.
NdArray augment(const NdArray& image, const AugmentConfig& config, Rng& rng);

/// Row reversal of a [C,H,W] image.
NdArray flip_vertical(const NdArray& image);
/// Column reversal of a [C,H,W] image.
NdArray flip_horizontal(const NdArray& image);

}  // namespace woundnet::data
