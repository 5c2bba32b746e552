#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "woundnet/checkpoint.hpp"

namespace httplib {
class Server;
}

namespace woundnet::service {

struct TaskPrediction {
  std::string task;
  double probability = 0.0;
  double threshold = 0.5;
  bool label = false;  // probability >= threshold
};

struct PredictionResponse {
  std::string model_version;
  std::string image_digest;  // SHA-256 of the request bytes, lowercase hex
  std::vector<TaskPrediction> predictions;
  double elapsed_ms = 0.0;
};

void to_json(nlohmann::json& j, const TaskPrediction& p);
void to_json(nlohmann::json& j, const PredictionResponse& r);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Thrown for request bytes that do not decode as PNG or PPM.
class UnreadableImage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Holds an immutable model; every method is safe to call concurrently.
class Predictor {
 public:
  /// Runs a forward pass on a constant grey image and throws NumericError
  /// (or whatever the model throws) when the result is unusable.
  explicit Predictor(model::LoadedCheckpoint checkpoint);

  /// `overrides` maps task name to threshold; unknown names or values outside
  /// [0,1] throw ValidationError.
  PredictionResponse predict(std::span<const std::uint8_t> image_bytes,
                             const std::map<std::string, double>& overrides = {}) const;

  nlohmann::json health() const;
  nlohmann::json tasks() const;
  const model::LoadedCheckpoint& checkpoint() const { return ckpt_; }

 private:
  model::LoadedCheckpoint ckpt_;
};

struct ServerOptions {
  std::size_t max_body_bytes = 16u << 20;
  /// Value for Access-Control-Allow-Origin; empty disables CORS headers.
  std::string cors_origin = "*";
};

/// Installs GET /health, GET /tasks and POST /predict on `server`.
void mount(httplib::Server& server, const Predictor& predictor, const ServerOptions& options = {});

}  // namespace woundnet::service
