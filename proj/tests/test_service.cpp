#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <future>
#include <httplib.h>
#include <limits>
#include <thread>

#include "woundnet/errors.hpp"
#include "woundnet/inference.hpp"
#include "woundnet/service.hpp"
#include "woundnet/synth.hpp"

using namespace woundnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("woundnet_test_service_" + name);
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

struct Fixture {
  fs::path dir = scratch("fixture");
  data::DatasetManifest manifest;
  fs::path checkpoint = dir / "m.wmtc";

  Fixture() {
    data::SynthConfig sc;
    sc.n_patients = 6;
    sc.total_images = 6;
    sc.width = 48;
    sc.height = 40;
    sc.format = data::ImageFormat::png;
    sc.seed = 17;
    manifest = data::generate_synthetic_dataset(sc, dir / "data").manifest;
    model::WoundModel net(tiny_model(), 4);
    model::CheckpointMeta meta;
    meta.thresholds = {0.5, 0.4, 0.3, 0.2, 0.1};
    meta.mean = {0.45, 0.4, 0.35};
    meta.std = {0.25, 0.25, 0.25};
    model::save_checkpoint(net, meta, checkpoint);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Runs a server on an ephemeral port for the lifetime of the object.
struct LiveServer {
  service::Predictor predictor;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit LiveServer(const service::ServerOptions& options = {})
      : predictor(model::load_checkpoint(fixture().checkpoint)) {
    service::mount(server, predictor, options);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

std::string file_bytes(const fs::path& p) {
  const auto b = data::read_file(p);
  return std::string(b.begin(), b.end());
}

}  // namespace

TEST_CASE("sha256 digests match known vectors") {
  CHECK(service::sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  CHECK(service::sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("health and tasks describe the loaded checkpoint") {
  LiveServer live;
  auto cli = live.client();
  auto h = cli.Get("/health");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(json::parse(h->body) == json{{"status", "ok"}, {"model_version", "woundnet-0"}});
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "*");

  auto t = cli.Get("/tasks");
  REQUIRE(t);
  const auto tasks = json::parse(t->body)["tasks"];
  REQUIRE(tasks.size() == 5);
  CHECK(tasks[0]["task"] == "deep");
  CHECK(tasks[4]["task"] == "pressure");
  CHECK(tasks[4]["threshold"] == 0.1);
}

TEST_CASE("predict matches the evaluation path to 1e-9") {
  const auto& fx = fixture();
  const auto ev = infer::evaluate_model(model::load_checkpoint(fx.checkpoint), fx.manifest);
  LiveServer live;
  auto cli = live.client();
  for (std::size_t i = 0; i < fx.manifest.size(); ++i) {
    const auto& s = fx.manifest.samples[i];
    auto res = cli.Post("/predict", file_bytes(fx.manifest.resolve(s)), "image/png");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto body = json::parse(res->body);
    REQUIRE(body["predictions"].size() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
      const auto& p = body["predictions"][t];
      CHECK(p["task"] == data::task_columns()[t]);
      CHECK(std::abs(p["probability"].get<double>() - ev.probabilities.probabilities[i][t]) <= 1e-9);
      CHECK(p["label"] == (p["probability"].get<double>() >= p["threshold"].get<double>() ? 1 : 0));
    }
    CHECK(body["image_digest"].get<std::string>().size() == 64);
  }
}

TEST_CASE("repeated and concurrent identical requests give identical predictions") {
  const auto bytes = file_bytes(fixture().manifest.resolve(fixture().manifest.samples[0]));
  LiveServer live;
  auto strip = [](const std::string& body) {
    auto j = json::parse(body);
    j.erase("elapsed_ms");
    return j;
  };
  std::vector<std::future<json>> futures;
  for (int k = 0; k < 6; ++k)
    futures.push_back(std::async(std::launch::async, [&] {
      auto cli = live.client();
      auto res = cli.Post("/predict", bytes, "application/octet-stream");
      return res && res->status == 200 ? strip(res->body) : json();
    }));
  const json first = futures[0].get();
  CHECK_FALSE(first.is_null());
  for (std::size_t k = 1; k < futures.size(); ++k) CHECK(futures[k].get() == first);
}

TEST_CASE("multipart upload and threshold overrides") {
  const auto bytes = file_bytes(fixture().manifest.resolve(fixture().manifest.samples[1]));
  LiveServer live;
  auto cli = live.client();
  httplib::MultipartFormDataItems items{{"file", bytes, "wound.png", "image/png"}};
  auto res = cli.Post("/predict?threshold.venous=0&threshold.deep=1", items);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto preds = json::parse(res->body)["predictions"];
  CHECK(preds[3]["threshold"] == 0.0);
  CHECK(preds[3]["label"] == 1);
  CHECK(preds[0]["threshold"] == 1.0);
  CHECK(preds[0]["label"] == 0);
  CHECK(preds[1]["threshold"] == 0.4);

  // clients that send no content type end up as form-urlencoded
  auto plain = cli.Post("/predict?threshold.pressure=0.25", bytes, "application/x-www-form-urlencoded");
  REQUIRE(plain);
  CHECK(plain->status == 200);
  CHECK(json::parse(plain->body)["predictions"][4]["threshold"] == 0.25);

  auto bad = cli.Post("/predict?threshold.gangrene=0.5", bytes, "image/png");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto bad_value = cli.Post("/predict?threshold.deep=high", bytes, "image/png");
  REQUIRE(bad_value);
  CHECK(bad_value->status == 400);
}

TEST_CASE("unreadable and oversized uploads are rejected") {
  service::ServerOptions opt;
  opt.max_body_bytes = 4096;
  opt.cors_origin = "http://localhost:5173";
  LiveServer live(opt);
  auto cli = live.client();
  auto text = cli.Post("/predict", "this is not an image", "text/plain");
  REQUIRE(text);
  CHECK(text->status == 422);
  CHECK(json::parse(text->body)["error"].get<std::string>().find("not a readable") != std::string::npos);
  CHECK(text->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  auto big = cli.Post("/predict", std::string(8192, 'x'), "application/octet-stream");
  REQUIRE(big);
  CHECK(big->status == 413);
}

TEST_CASE("a checkpoint that fails the self-test is refused") {
  const auto dir = scratch("selftest");
  model::WoundModel net(tiny_model(), 4);
  net.parameters().front()->value[0] = std::numeric_limits<double>::quiet_NaN();
  model::save_checkpoint(net, {}, dir / "nan.wmtc");
  CHECK_THROWS(service::Predictor(model::load_checkpoint(dir / "nan.wmtc")));
}
