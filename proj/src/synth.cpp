#include "woundnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "woundnet/errors.hpp"

namespace woundnet::data {
namespace {

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

constexpr Rgb kSkinLight{0.90, 0.72, 0.55};
constexpr Rgb kSkinDark{0.55, 0.38, 0.27};
constexpr Rgb kWoundBed{0.62, 0.20, 0.17};
constexpr Rgb kNecrotic{0.08, 0.05, 0.05};
constexpr Rgb kSlough{0.74, 0.82, 0.16};
constexpr Rgb kPaleRim{0.96, 0.95, 0.92};
constexpr Rgb kVenousTint{0.30, 0.28, 0.62};
constexpr Rgb kPressureBand{0.90, 0.48, 0.62};

std::string id_string(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_patients == 0) throw ValidationError("synth: n_patients must be positive");
  for (double p : prevalence)
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("synth: prevalences must lie in (0,1)");
  if (images_per_patient.empty()) throw ValidationError("synth: empty images_per_patient distribution");
  double s = 0.0;
  for (double p : images_per_patient) {
    if (p < 0.0) throw ValidationError("synth: negative images_per_patient probability");
    s += p;
  }
  if (s <= 0.0) throw ValidationError("synth: images_per_patient has zero mass");
  if (total_images && *total_images < n_patients)
    throw ValidationError("synth: total_images smaller than n_patients");
  if (!(signature_strength > 0.0 && signature_strength <= 1.0))
    throw ValidationError("synth: signature_strength must be in (0,1]");
  if (noise < 0.0) throw ValidationError("synth: noise must be non-negative");
  if (width < 16 || height < 16) throw ValidationError("synth: images must be at least 16x16");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"n_patients", c.n_patients},
                     {"images_per_patient", c.images_per_patient},
                     {"prevalence", c.prevalence},
                     {"signature_strength", c.signature_strength},
                     {"noise", c.noise},
                     {"width", c.width},
                     {"height", c.height},
                     {"format", c.format == ImageFormat::png ? "png" : "ppm"},
                     {"seed", c.seed}};
  if (c.total_images) j["total_images"] = *c.total_images;
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig d;
  c.n_patients = j.value("n_patients", d.n_patients);
  c.images_per_patient = j.value("images_per_patient", d.images_per_patient);
  if (j.contains("total_images")) c.total_images = j.at("total_images").get<std::size_t>();
  c.prevalence = j.value("prevalence", d.prevalence);
  c.signature_strength = j.value("signature_strength", d.signature_strength);
  c.noise = j.value("noise", d.noise);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  const auto format = j.value("format", std::string("ppm"));
  if (format != "png" && format != "ppm") throw ValidationError("synth: format must be ppm or png, got " + format);
  c.format = format == "png" ? ImageFormat::png : ImageFormat::ppm;
  c.seed = j.value("seed", d.seed);
}

Image render_wound(const LabelVector& labels, const SynthConfig& cfg, Rng& rng) {
  const std::size_t w = cfg.width, h = cfg.height;
  const double side = static_cast<double>(std::min(w, h));
  const double alpha = cfg.signature_strength;

  const Rgb skin = lerp(kSkinLight, kSkinDark, uniform01(rng));
  const double light_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double light_amp = uniform(rng, 0.0, 0.1);
  const double cx = static_cast<double>(w) / 2.0 + uniform(rng, -0.08, 0.08) * side;
  const double cy = static_cast<double>(h) / 2.0 + uniform(rng, -0.08, 0.08) * side;
  const double ax = uniform(rng, 0.20, 0.30) * side;
  const double ay = uniform(rng, 0.16, 0.26) * side;
  const double phi = uniform(rng, 0.0, std::numbers::pi);
  const double band_freq = uniform(rng, 3.0, 4.0);
  const double speckle_rate = uniform(rng, 0.25, 0.4);
  std::normal_distribution<double> noise(0.0, cfg.noise);

  Image img(w, h);
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double lx = std::cos(light_angle), ly = std::sin(light_angle);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double u = (cphi * dx + sphi * dy) / ax, v = (-sphi * dx + cphi * dy) / ay;
      const double r = std::sqrt(u * u + v * v);

      Rgb c = skin;
      if (labels[3] && r > 0.95) c = lerp(c, kVenousTint, 0.6 * alpha);
      if (r < 1.0) {
        c = lerp(c, kWoundBed, std::min(1.0, (1.0 - r) * 6.0));
        if (labels[4] && r > 0.5 && std::sin(r * 2.0 * std::numbers::pi * band_freq) > 0.0)
          c = lerp(c, kPressureBand, alpha);
        if (labels[0] && r < 0.45) c = lerp(c, kNecrotic, alpha);
      }
      if (labels[2] && r >= 1.0 && r < 1.35) c = lerp(c, kPaleRim, alpha);
      const double speckle = uniform01(rng);
      if (labels[1] && r < 1.3 && speckle < speckle_rate) c = lerp(c, kSlough, alpha);

      const double shade =
          1.0 + light_amp * ((dx * lx + dy * ly) / (0.5 * static_cast<double>(std::max(w, h))));
      const double n0 = noise(rng), n1 = noise(rng), n2 = noise(rng);
      const double ch[3] = {c.r * shade + n0, c.g * shade + n1, c.b * shade + n2};
      for (std::size_t k = 0; k < 3; ++k)
        img.at(x, y, k) = static_cast<std::uint8_t>(std::lround(std::clamp(ch[k], 0.0, 1.0) * 255.0));
    }
  return img;
}

SynthResult generate_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir / "images");
  Rng rng(derive_seed(cfg.seed, std::uint64_t{0}));

  std::vector<std::size_t> per_patient(cfg.n_patients, 1);
  if (cfg.total_images) {
    for (std::size_t extra = *cfg.total_images - cfg.n_patients; extra > 0; --extra)
      ++per_patient[uniform_index(rng, cfg.n_patients)];
  } else {
    std::discrete_distribution<std::size_t> count(cfg.images_per_patient.begin(),
                                                  cfg.images_per_patient.end());
    for (auto& k : per_patient) k = count(rng) + 1;
  }

  SynthResult res;
  res.manifest.base_dir = out_dir;
  const char* ext = cfg.format == ImageFormat::png ? ".png" : ".ppm";
  std::size_t image_index = 0;
  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    const std::string patient = id_string("pt", p + 1, 5);
    for (std::size_t k = 0; k < per_patient[p]; ++k) {
      WoundSample s;
      s.image_id = id_string("img", ++image_index, 6);
      s.patient_id = patient;
      s.image_path = "images/" + s.image_id + ext;
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        s.labels[t] = uniform01(rng) < cfg.prevalence[t] ? 1 : 0;
        res.positive_counts[t] += s.labels[t];
      }
      Rng pixel_rng(derive_seed(cfg.seed, s.image_id));
      write_image(out_dir / s.image_path, render_wound(s.labels, cfg, pixel_rng));
      res.manifest.samples.push_back(std::move(s));
    }
  }
  res.n_images = image_index;
  save_manifest(res.manifest, out_dir / "manifest.csv");

  nlohmann::json prov;
  prov["generator_version"] = kSynthGeneratorVersion;
  prov["config"] = cfg;
  prov["n_images"] = res.n_images;
  nlohmann::json counts;
  for (std::size_t t = 0; t < kNumTasks; ++t) counts[task_columns()[t]] = res.positive_counts[t];
  prov["positive_counts"] = counts;
  std::ofstream(out_dir / "provenance.json") << prov.dump(2) << '\n';
  return res;
}

}  // namespace woundnet::data
