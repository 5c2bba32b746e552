#include "woundnet/service.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <httplib.h>

#include "woundnet/errors.hpp"
#include "woundnet/image.hpp"
#include "woundnet/inference.hpp"

namespace woundnet::service {

void to_json(nlohmann::json& j, const TaskPrediction& p) {
  j = nlohmann::json{{"task", p.task}, {"probability", p.probability}, {"threshold", p.threshold}, {"label", p.label ? 1 : 0}};
}

void to_json(nlohmann::json& j, const PredictionResponse& r) {
  j = nlohmann::json{{"model_version", r.model_version},
                     {"image_digest", r.image_digest},
                     {"predictions", r.predictions},
                     {"elapsed_ms", r.elapsed_ms}};
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::string hex(2 * len, '0');
  for (unsigned i = 0; i < len; ++i) std::snprintf(&hex[2 * i], 3, "%02x", md[i]);
  return hex;
}

Predictor::Predictor(model::LoadedCheckpoint checkpoint) : ckpt_(std::move(checkpoint)) {
  const std::size_t s = ckpt_.model.config().input_size;
  data::Image grey(s, s);
  for (auto& v : grey.rgb) v = 128;
  const NdArray x = infer::prepare(grey, s, ckpt_.meta);
  const NdArray p = ckpt_.model.predict_proba(data::stack({&x}));
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw NumericError("self-test forward pass produced a non-probability");
  if (p.size() != ckpt_.model.config().num_tasks) throw NumericError("self-test forward pass has the wrong width");
}

PredictionResponse Predictor::predict(std::span<const std::uint8_t> bytes,
                                      const std::map<std::string, double>& overrides) const {
  const auto start = std::chrono::steady_clock::now();
  const auto& names = ckpt_.model.config().task_names;
  std::vector<double> thresholds = ckpt_.meta.thresholds;
  for (const auto& [task, value] : overrides) {
    const auto it = std::find(names.begin(), names.end(), task);
    if (it == names.end()) throw ValidationError("unknown task '" + task + "' in threshold override");
    if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("threshold for '" + task + "' must be in [0,1]");
    thresholds[static_cast<std::size_t>(it - names.begin())] = value;
  }

  data::Image img;
  try {
    img = data::decode_image(bytes);
  } catch (const std::exception& e) {
    throw UnreadableImage(e.what());
  }
  const std::size_t s = ckpt_.model.config().input_size;
  const NdArray x = infer::prepare(img, s, ckpt_.meta);
  const NdArray p = ckpt_.model.predict_proba(data::stack({&x}));

  PredictionResponse r;
  r.model_version = ckpt_.meta.model_version;
  r.image_digest = sha256_hex(bytes);
  for (std::size_t t = 0; t < names.size(); ++t)
    r.predictions.push_back({names[t], p[t], thresholds[t], p[t] >= thresholds[t]});
  r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json Predictor::health() const { return {{"status", "ok"}, {"model_version", ckpt_.meta.model_version}}; }

nlohmann::json Predictor::tasks() const {
  const auto& cfg = ckpt_.model.config();
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t t = 0; t < cfg.num_tasks; ++t)
    list.push_back({{"task", cfg.task_names[t]}, {"index", t}, {"threshold", ckpt_.meta.thresholds[t]}});
  return {{"model_version", ckpt_.meta.model_version}, {"input_size", cfg.input_size}, {"tasks", list}};
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason) {
  send_json(res, status, {{"error", reason}});
}

// query parameters of the form threshold.<task>=<value>; read from the URL
// only, since httplib also merges urlencoded bodies into req.params
std::map<std::string, double> threshold_overrides(const httplib::Request& req) {
  std::map<std::string, double> out;
  const std::string prefix = "threshold.";
  httplib::Params query;
  if (const auto q = req.target.find('?'); q != std::string::npos)
    httplib::detail::parse_query_text(req.target.substr(q + 1), query);
  for (const auto& [key, value] : query) {
    if (key.rfind(prefix, 0) != 0) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw ValidationError("threshold '" + value + "' is not a number");
    out[key.substr(prefix.size())] = v;
  }
  return out;
}

}  // namespace

void mount(httplib::Server& server, const Predictor& predictor, const ServerOptions& options) {
  server.set_payload_max_length(options.max_body_bytes);
  if (!options.cors_origin.empty()) {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  server.Get("/health", [&predictor](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, predictor.health());
  });
  server.Get("/tasks", [&predictor](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, predictor.tasks());
  });
  server.Post("/predict", [&predictor, &options](const httplib::Request& req, httplib::Response& res) {
    const std::string* body = &req.body;
    if (req.is_multipart_form_data()) {
      if (req.files.empty()) return send_error(res, 422, "multipart request carries no file");
      body = &req.files.begin()->second.content;
    }
    if (body->size() > options.max_body_bytes) return send_error(res, 413, "image exceeds the size limit");
    try {
      const auto overrides = threshold_overrides(req);
      const auto* data = reinterpret_cast<const std::uint8_t*>(body->data());
      send_json(res, 200, predictor.predict({data, body->size()}, overrides));
    } catch (const UnreadableImage& e) {
      send_error(res, 422, std::string("not a readable PNG or PPM image: ") + e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });
}

}  // namespace woundnet::service
