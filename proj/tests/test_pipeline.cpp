#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "woundnet/checkpoint.hpp"
#include "woundnet/errors.hpp"
#include "woundnet/inference.hpp"
#include "woundnet/synth.hpp"
#include "woundnet/train.hpp"

using namespace woundnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("woundnet_test_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.input_size = 32;
  c.stage_channels = {4, 8, 8, 16};
  c.classifier_hidden = 8;
  return c;
}

// 8 patients, one image each, balanced-ish labels
data::DatasetManifest tiny_dataset(const fs::path& dir, std::size_t n = 8, std::uint64_t seed = 3) {
  data::SynthConfig sc;
  sc.n_patients = n;
  sc.total_images = n;
  sc.prevalence = {0.5, 0.5, 0.5, 0.5, 0.5};
  sc.width = 40;
  sc.height = 36;
  sc.seed = seed;
  return data::generate_synthetic_dataset(sc, dir).manifest;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("checkpoint f64 round trip is bit exact and keeps metadata") {
  const auto dir = scratch("ckpt64");
  model::WoundModel net(tiny_model(), 11);
  model::CheckpointMeta meta;
  meta.thresholds = {0.1, 0.2, 0.3, 0.4, 0.6};
  meta.mean = {0.5, 0.4, 0.3};
  meta.std = {0.2, 0.25, 0.3};
  meta.extra = {{"note", "x"}};
  model::save_checkpoint(net, meta, dir / "m.wmtc");
  const auto loaded = model::load_checkpoint(dir / "m.wmtc");

  CHECK(loaded.meta.thresholds == meta.thresholds);
  CHECK(loaded.meta.mean == meta.mean);
  CHECK(loaded.meta.std == meta.std);
  CHECK(loaded.meta.extra["note"] == "x");
  CHECK(loaded.model.config().stage_channels == tiny_model().stage_channels);
  const auto a = net.parameters();
  const auto b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    REQUIRE(a[i]->value.size() == b[i]->value.size());
    CHECK(std::memcmp(a[i]->value.raw(), b[i]->value.raw(), a[i]->value.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("checkpoint f32 storage rounds to single precision") {
  const auto dir = scratch("ckpt32");
  model::WoundModel net(tiny_model(), 12);
  model::save_checkpoint(net, {}, dir / "m.wmtc", model::StorageType::f32);
  const auto loaded = model::load_checkpoint(dir / "m.wmtc");
  const auto a = net.parameters();
  const auto b = loaded.model.parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i]->value.size(); ++k)
      CHECK(b[i]->value[k] == static_cast<double>(static_cast<float>(a[i]->value[k])));
  CHECK(loaded.meta.thresholds == std::vector<double>(5, 0.5));
}

TEST_CASE("corrupt checkpoints are rejected with a clear message") {
  const auto dir = scratch("ckptbad");
  model::WoundModel net(tiny_model(), 1);
  model::save_checkpoint(net, {}, dir / "good.wmtc");
  std::string bytes = slurp(dir / "good.wmtc");

  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(model::load_checkpoint(write("magic.wmtc", bad_magic)), doctest::Contains("bad magic"),
                       ValidationError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(model::load_checkpoint(write("version.wmtc", bad_version)), doctest::Contains("version 9"),
                       ValidationError);

  CHECK_THROWS_WITH_AS(model::load_checkpoint(write("trunc.wmtc", bytes.substr(0, bytes.size() - 100))),
                       doctest::Contains("truncated"), ValidationError);
  CHECK_THROWS_AS(model::load_checkpoint(dir / "absent.wmtc"), ValidationError);
}

TEST_CASE("normalization from the checkpoint is applied by prepare") {
  data::Image img(4, 4);
  for (auto& v : img.rgb) v = 128;
  model::CheckpointMeta meta;
  CHECK(infer::prepare(img, 4, meta)[0] == doctest::Approx(128.0 / 255.0));
  meta.mean = {0.5, 0.5, 0.5};
  meta.std = {0.25, 0.25, 0.25};
  CHECK(infer::prepare(img, 4, meta)[0] == doctest::Approx((128.0 / 255.0 - 0.5) / 0.25));
}

TEST_CASE("a short training run writes a loadable checkpoint and a log") {
  const auto data_dir = scratch("train_data");
  const auto manifest = tiny_dataset(data_dir);
  train::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 5;
  const auto out = scratch("train_out");
  std::ostringstream progress;
  const auto r = train::train_model(tiny_model(), cfg, manifest, manifest, out, &progress);

  REQUIRE(r.log.size() == 2);
  CHECK(fs::exists(r.checkpoint));
  CHECK(r.best_epoch >= 1);
  for (const auto& e : r.log) {
    CHECK(std::isfinite(e["train_loss"].get<double>()));
    CHECK(e.contains("val_auc"));
  }
  CHECK(progress.str().find("epoch 2/2") != std::string::npos);

  const auto ckpt = model::load_checkpoint(r.checkpoint);
  CHECK(ckpt.meta.extra["best_epoch"] == r.best_epoch);
  const auto ev = infer::evaluate_model(ckpt, manifest);
  CHECK(ev.probabilities.image_ids.size() == 8);
  for (const auto& row : ev.probabilities.probabilities)
    for (double p : row) CHECK((p > 0.0 && p < 1.0));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data_dir = scratch("det_data");
  const auto manifest = tiny_dataset(data_dir);
  train::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.seed = 21;
  cfg.lr_schedule = "cosine";
  const auto a = train::train_model(tiny_model(), cfg, manifest, manifest, scratch("det_a"));
  const auto b = train::train_model(tiny_model(), cfg, manifest, manifest, scratch("det_b"));
  CHECK(slurp(a.log_path) == slurp(b.log_path));
  CHECK(slurp(a.checkpoint) == slurp(b.checkpoint));

  cfg.seed = 22;
  const auto c = train::train_model(tiny_model(), cfg, manifest, manifest, scratch("det_c"));
  CHECK(slurp(a.log_path) != slurp(c.log_path));
}

TEST_CASE("threshold extremes give the expected operating points") {
  const auto data_dir = scratch("thr_data");
  const auto manifest = tiny_dataset(data_dir, 12, 4);
  const auto dir = scratch("thr_out");
  model::WoundModel net(tiny_model(), 2);
  model::save_checkpoint(net, {}, dir / "m.wmtc");
  const auto ckpt = model::load_checkpoint(dir / "m.wmtc");

  const std::vector<double> zeros(5, 0.0);
  const auto ev = infer::evaluate_model(ckpt, manifest, zeros);
  for (const auto& row : ev.report.rows) {
    if (row.metrics.sensitivity) CHECK(*row.metrics.sensitivity == 1.0);
    if (row.metrics.specificity) CHECK(*row.metrics.specificity == 0.0);
  }
  const std::vector<double> wrong(3, 0.5);
  CHECK_THROWS_AS(infer::evaluate_model(ckpt, manifest, wrong), ValidationError);
}

TEST_CASE("an untrained model is near chance") {
  const auto data_dir = scratch("chance_data");
  const auto manifest = tiny_dataset(data_dir, 60, 9);
  const auto dir = scratch("chance_out");
  model::WoundModel net(tiny_model(), 8);
  model::save_checkpoint(net, {}, dir / "m.wmtc");
  const auto ev = infer::evaluate_model(model::load_checkpoint(dir / "m.wmtc"), manifest);
  double sum = 0.0;
  for (const auto& row : ev.report.rows) sum += row.auc.value_or(0.5);
  CHECK(sum / 5.0 > 0.3);
  CHECK(sum / 5.0 < 0.7);
}

TEST_CASE("invalid training settings are rejected") {
  train::TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.optimizer = "rmsprop";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.lr_schedule = "step";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = {};
  nlohmann::json j = cfg;
  const auto back = j.get<train::TrainConfig>();
  CHECK(nlohmann::json(back) == j);
}
