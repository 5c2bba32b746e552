#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "woundnet/autodiff.hpp"
#include "json.hpp"
#include "woundnet/ops.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::model {

using ad::Mode;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Canonical task order used by manifests, checkpoints and reports.
const std::vector<std::string>& default_task_names();

struct ModelConfig {
  std::size_t input_size = 64;
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t num_tasks = 5;
  std::vector<std::string> task_names = default_task_names();
  std::size_t attention_reduction = 2;
  std::size_t classifier_hidden = 64;

  /// Throws ValidationError on inconsistent settings.
  void validate() const;
  std::size_t fused_width() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Parameters of one task-specific attention module attached to a backbone stage.
struct AttentionBlock {
  const Parameter* squeeze_w = nullptr;  // 1x1, in -> C/r
  const Parameter* squeeze_b = nullptr;
  const Parameter* expand_w = nullptr;   // 1x1, C/r -> C
  const Parameter* expand_b = nullptr;
  const Parameter* down_w = nullptr;     // 3x3 after 2x2 pooling; absent at the last stage
  const Parameter* down_b = nullptr;

  struct Output {
    Var mask;   // sigmoid gate in (0,1), shaped like the shared feature
    Var gated;  // mask * shared
    std::optional<Var> next;  // input for the next stage's block
  };

  /// mask = sigmoid(expand(relu(squeeze(concat(shared, prev))))), gated = mask * shared,
  /// next = relu(conv3x3(maxpool2(gated))).
  Output apply(Tape& tape, Var shared, std::optional<Var> prev) const;
};

/// Global-average-pools each stage map and concatenates along channels.
Var fuse_levels(const std::vector<Var>& per_stage);

/// Values recorded during one forward pass, for inspection and tests.
struct ForwardTrace {
  std::vector<Var> shared;                 // per stage
  std::vector<std::vector<Var>> masks;     // [task][stage]
  std::vector<Var> fused;                  // per task
  Var logits;                              // [N, T]
};

/// Shared residual backbone with one attention branch and classifier head per task.
class WoundModel {
 public:
  explicit WoundModel(ModelConfig config, std::uint64_t seed = 0);

  WoundModel(const WoundModel&) = delete;
  WoundModel& operator=(const WoundModel&) = delete;
  WoundModel(WoundModel&&) = default;
  WoundModel& operator=(WoundModel&&) = default;

  const ModelConfig& config() const { return config_; }

  /// Logits [N, num_tasks] for a batch [N,3,S,S]. Training mode normalizes
  /// with batch statistics and folds them into the running statistics.
  Var forward(Tape& tape, const NdArray& batch, Mode mode, ForwardTrace* trace = nullptr);
  /// Eval-mode forward. Does not modify the model.
  Var forward(Tape& tape, const NdArray& batch, ForwardTrace* trace = nullptr) const;

  NdArray predict_logits(const NdArray& batch) const;
  NdArray predict_proba(const NdArray& batch) const;

  /// Registry in construction order; includes non-trainable running statistics.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable_parameters();
  Parameter& parameter(const std::string& name);
  const Parameter* find(const std::string& name) const;

  /// Parameters used only by task `t` (attention blocks and head).
  std::vector<Parameter*> task_parameters(std::size_t t);
  std::vector<Parameter*> backbone_parameters();

  const AttentionBlock& attention(std::size_t task, std::size_t stage) const {
    return attention_.at(task).at(stage);
  }

  void zero_grad();

  double bn_momentum = 0.1;

 private:
  struct BnLayer {
    Parameter* gamma;
    Parameter* beta;
    Parameter* running_mean;
    Parameter* running_var;
  };
  struct Stage {
    Parameter* conv1_w;
    BnLayer bn1;
    Parameter* conv2_w;
    BnLayer bn2;
    Parameter* proj_w = nullptr;  // 1x1 shortcut when channel count changes
    Parameter* proj_b = nullptr;
  };
  struct Head {
    Parameter* fc1_w;
    Parameter* fc1_b;
    Parameter* fc2_w;
    Parameter* fc2_b;
  };
  struct BnUpdate {
    BnLayer layer;
    ad::BatchStats stats;
  };

  Parameter* add_param(const std::string& name, NdArray value, bool trainable = true);
  Parameter* add_he(const std::string& name, Shape shape, std::size_t fan_in);
  BnLayer add_bn(const std::string& prefix, std::size_t channels);
  Var forward_impl(Tape& tape, const NdArray& batch, Mode mode, std::vector<BnUpdate>* updates,
                   ForwardTrace* trace) const;
  Var batch_norm(Tape& tape, Var x, const BnLayer& bn, Mode mode,
                 std::vector<BnUpdate>* updates) const;

  ModelConfig config_;
  Rng init_rng_;
  std::deque<Parameter> registry_;
  std::vector<Stage> stages_;
  std::vector<std::vector<AttentionBlock>> attention_;
  std::vector<Head> heads_;
  std::vector<std::vector<Parameter*>> task_params_;
};

/// Total trainable scalars.
std::size_t count_parameters(const std::vector<const Parameter*>& params);
std::size_t count_parameters(const WoundModel& model);
double size_ratio(const WoundModel& a, const WoundModel& b);

}  // namespace woundnet::model
