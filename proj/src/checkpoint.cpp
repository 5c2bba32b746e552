#include "woundnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "woundnet/errors.hpp"

namespace woundnet::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host order");

constexpr char kMagic[4] = {'W', 'M', 'T', 'C'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ValidationError("checkpoint truncated in " + what);
  return v;
}

}  // namespace

void save_checkpoint(const WoundModel& model, const CheckpointMeta& meta, const std::filesystem::path& path,
                     StorageType storage) {
  const auto& cfg = model.config();
  std::vector<double> thresholds = meta.thresholds;
  if (thresholds.empty()) thresholds.assign(cfg.num_tasks, 0.5);
  if (thresholds.size() != cfg.num_tasks) throw ValidationError("checkpoint: one threshold per task required");

  const std::size_t width = storage == StorageType::f64 ? 8 : 4;
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const Parameter* p : model.parameters()) {
    index.push_back({{"name", p->name},
                     {"offset", offset},
                     {"shape", p->value.shape()},
                     {"dtype", storage == StorageType::f64 ? "f64" : "f32"},
                     {"trainable", p->trainable}});
    offset += p->value.size() * width;
  }
  nlohmann::json header{{"model_version", meta.model_version},
                        {"config", cfg},
                        {"tasks", cfg.task_names},
                        {"thresholds", thresholds},
                        {"normalization", {{"pixel_scale", meta.pixel_scale}, {"mean", meta.mean}, {"std", meta.std}}},
                        {"extra", meta.extra},
                        {"blob_bytes", offset},
                        {"parameters", index}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : model.parameters()) {
    if (storage == StorageType::f64) {
      out.write(reinterpret_cast<const char*>(p->value.raw()), static_cast<std::streamsize>(p->value.size() * 8));
    } else {
      std::vector<float> f(p->value.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(p->value[i]);
      out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(path.string() + " is not a woundnet checkpoint (bad magic)");
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto header_len = take<std::uint64_t>(in, "header length");
  if (header_len > (1u << 26)) throw ValidationError("checkpoint header length is implausible");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw ValidationError("checkpoint truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  CheckpointMeta meta;
  meta.model_version = header.at("model_version").get<std::string>();
  meta.thresholds = header.at("thresholds").get<std::vector<double>>();
  const auto& norm = header.at("normalization");
  meta.pixel_scale = norm.at("pixel_scale").get<double>();
  meta.mean = norm.at("mean").get<std::array<double, 3>>();
  meta.std = norm.at("std").get<std::array<double, 3>>();
  meta.extra = header.value("extra", nlohmann::json::object());

  ModelConfig cfg = header.at("config").get<ModelConfig>();
  cfg.validate();
  if (meta.thresholds.size() != cfg.num_tasks) throw ValidationError("checkpoint: threshold count differs from task count");
  WoundModel model(cfg, 0);

  std::vector<char> blob(header.at("blob_bytes").get<std::size_t>());
  if (!in.read(blob.data(), static_cast<std::streamsize>(blob.size()))) throw ValidationError("checkpoint truncated in tensor data");

  std::set<std::string> seen;
  for (const auto& e : header.at("parameters")) {
    const auto name = e.at("name").get<std::string>();
    Parameter* p = nullptr;
    try {
      p = &model.parameter(name);
    } catch (const std::exception&) {
      throw ValidationError("checkpoint parameter '" + name + "' does not exist in this model configuration");
    }
    if (e.at("shape").get<Shape>() != p->value.shape())
      throw ValidationError("checkpoint parameter '" + name + "' has shape " + shape_str(e.at("shape").get<Shape>()) +
                            ", model expects " + shape_str(p->value.shape()));
    const auto dtype = e.at("dtype").get<std::string>();
    const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
    if (width == 0) throw ValidationError("checkpoint parameter '" + name + "' has unknown dtype " + dtype);
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + p->value.size() * width > blob.size())
      throw ValidationError("checkpoint parameter '" + name + "' runs past the tensor data");
    if (width == 8) {
      std::memcpy(p->value.raw(), blob.data() + offset, p->value.size() * 8);
    } else {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        float f;
        std::memcpy(&f, blob.data() + offset + i * 4, 4);
        p->value[i] = static_cast<double>(f);
      }
    }
    seen.insert(name);
  }
  for (const Parameter* p : model.parameters())
    if (!seen.count(p->name)) throw ValidationError("checkpoint is missing parameter '" + p->name + "'");
  return {std::move(model), std::move(meta)};
}

}  // namespace woundnet::model
