#include "woundnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "woundnet/errors.hpp"

namespace woundnet::data {

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.rotation_deg = 0.0;
  c.translation = 0.0;
  c.scale_min = c.scale_max = 1.0;
  c.hflip_prob = c.vflip_prob = 0.0;
  c.brightness = 0.0;
  c.contrast_min = c.contrast_max = 1.0;
  return c;
}

void AugmentConfig::validate() const {
  auto bad = [](const std::string& what) { throw ValidationError("augment config: " + what); };
  if (rotation_deg < 0 || translation < 0 || translation >= 0.5) bad("rotation/translation out of range");
  if (scale_min <= 0 || scale_max < scale_min) bad("scale range must satisfy 0 < min <= max");
  if (hflip_prob < 0 || hflip_prob > 1 || vflip_prob < 0 || vflip_prob > 1) bad("flip probabilities must be in [0,1]");
  if (brightness < 0 || brightness > 1) bad("brightness delta must be in [0,1]");
  if (contrast_min <= 0 || contrast_max < contrast_min) bad("contrast range must satisfy 0 < min <= max");
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = nlohmann::json{{"rotation_deg", c.rotation_deg}, {"translation", c.translation},
                     {"scale_min", c.scale_min},       {"scale_max", c.scale_max},
                     {"hflip_prob", c.hflip_prob},     {"vflip_prob", c.vflip_prob},
                     {"brightness", c.brightness},     {"contrast_min", c.contrast_min},
                     {"contrast_max", c.contrast_max}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  const AugmentConfig d;
  c.rotation_deg = j.value("rotation_deg", d.rotation_deg);
  c.translation = j.value("translation", d.translation);
  c.scale_min = j.value("scale_min", d.scale_min);
  c.scale_max = j.value("scale_max", d.scale_max);
  c.hflip_prob = j.value("hflip_prob", d.hflip_prob);
  c.vflip_prob = j.value("vflip_prob", d.vflip_prob);
  c.brightness = j.value("brightness", d.brightness);
  c.contrast_min = j.value("contrast_min", d.contrast_min);
  c.contrast_max = j.value("contrast_max", d.contrast_max);
  c.seed = j.value("seed", d.seed);
}

NdArray flip_vertical(const NdArray& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  NdArray out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(image.raw() + (ch * h + y) * w, w, out.raw() + (ch * h + (h - 1 - y)) * w);
  return out;
}

NdArray flip_horizontal(const NdArray& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  NdArray out(image.shape());
  for (std::size_t r = 0; r < c * h; ++r)
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = image[r * w + (w - 1 - x)];
  return out;
}

namespace {

// Inverse-mapped affine warp about the image center, bilinear sampling with
// border replication.
NdArray warp(const NdArray& image, double angle, double scale, double tx, double ty) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double ca = std::cos(angle) / scale, sa = std::sin(angle) / scale;
  NdArray out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx - tx, dy = static_cast<double>(y) - cy - ty;
      double sx = ca * dx + sa * dy + cx;
      double sy = -sa * dx + ca * dy + cy;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const auto y0 = static_cast<std::size_t>(std::floor(sy));
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = image.raw() + ch * h * w;
        const double top = p[y0 * w + x0] + fx * (p[y0 * w + x1] - p[y0 * w + x0]);
        const double bot = p[y1 * w + x0] + fx * (p[y1 * w + x1] - p[y1 * w + x0]);
        out[(ch * h + y) * w + x] = top + fy * (bot - top);
      }
    }
  return out;
}

}  // namespace

NdArray augment(const NdArray& image, const AugmentConfig& cfg, Rng& rng) {
  if (image.rank() != 3) throw ShapeError("augment: expected [C,H,W], got " + shape_str(image.shape()));
  // every draw happens unconditionally so the stream does not depend on the config
  const double angle = uniform(rng, -cfg.rotation_deg, cfg.rotation_deg) * std::numbers::pi / 180.0;
  const double scale = uniform(rng, cfg.scale_min, cfg.scale_max);
  const double tx = uniform(rng, -cfg.translation, cfg.translation) * static_cast<double>(image.dim(2));
  const double ty = uniform(rng, -cfg.translation, cfg.translation) * static_cast<double>(image.dim(1));
  const bool hflip = uniform01(rng) < cfg.hflip_prob;
  const bool vflip = uniform01(rng) < cfg.vflip_prob;
  const double delta = uniform(rng, -cfg.brightness, cfg.brightness);
  const double contrast = uniform(rng, cfg.contrast_min, cfg.contrast_max);

  NdArray out = (angle == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0)
                    ? image
                    : warp(image, angle, scale, tx, ty);
  if (hflip) out = flip_horizontal(out);
  if (vflip) out = flip_vertical(out);
  if (delta != 0.0)
    for (double& v : out.data()) v += delta;
  if (contrast != 1.0) {
    double m = 0.0;
    for (double v : out.data()) m += v;
    m /= static_cast<double>(out.size());
    for (double& v : out.data()) v = (v - m) * contrast + m;
  }
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace woundnet::data
