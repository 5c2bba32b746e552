#include "woundnet/model.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "woundnet/errors.hpp"

namespace woundnet::model {

using namespace woundnet::ad;

const std::vector<std::string>& default_task_names() {
  static const std::vector<std::string> names{"deep", "infected", "arterial", "venous", "pressure"};
  return names;
}

void ModelConfig::validate() const {
  if (stage_channels.empty()) throw ValidationError("model config: stage_channels is empty");
  for (auto c : stage_channels)
    if (c == 0) throw ValidationError("model config: stage_channels must be positive");
  if (num_tasks == 0) throw ValidationError("model config: num_tasks must be positive");
  if (task_names.size() != num_tasks)
    throw ValidationError("model config: num_tasks is " + std::to_string(num_tasks) + " but " +
                          std::to_string(task_names.size()) + " task names given");
  if (std::set<std::string>(task_names.begin(), task_names.end()).size() != task_names.size())
    throw ValidationError("model config: duplicate task names");
  if (attention_reduction == 0) throw ValidationError("model config: attention_reduction must be positive");
  if (classifier_hidden == 0) throw ValidationError("model config: classifier_hidden must be positive");
  std::size_t s = input_size;
  for (std::size_t i = 1; i < stage_channels.size(); ++i) s /= 2;
  if (s < 1)
    throw ValidationError("model config: input_size " + std::to_string(input_size) + " too small for " +
                          std::to_string(stage_channels.size()) + " stages");
}

std::size_t ModelConfig::fused_width() const {
  return std::accumulate(stage_channels.begin(), stage_channels.end(), std::size_t{0});
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"stage_channels", c.stage_channels},
                     {"num_tasks", c.num_tasks},
                     {"task_names", c.task_names},
                     {"attention_reduction", c.attention_reduction},
                     {"classifier_hidden", c.classifier_hidden}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.stage_channels = j.value("stage_channels", d.stage_channels);
  c.task_names = j.value("task_names", d.task_names);
  c.num_tasks = j.value("num_tasks", c.task_names.size());
  c.attention_reduction = j.value("attention_reduction", d.attention_reduction);
  c.classifier_hidden = j.value("classifier_hidden", d.classifier_hidden);
}

AttentionBlock::Output AttentionBlock::apply(Tape& tape, Var shared, std::optional<Var> prev) const {
  if (prev && prev->shape()[1] != shared.shape()[1])
    throw ShapeError("attention block: previous task feature has " +
                     std::to_string(prev->shape()[1]) + " channels, shared feature has " +
                     std::to_string(shared.shape()[1]));
  const Var in = prev ? concat({shared, *prev}) : shared;
  const Var hidden =
      relu(conv2d(in, tape.param(*squeeze_w), tape.param(*squeeze_b), 1, 0));
  Output out;
  out.mask = sigmoid(conv2d(hidden, tape.param(*expand_w), tape.param(*expand_b), 1, 0));
  out.gated = mul(out.mask, shared);
  if (down_w)
    out.next = relu(conv2d(max_pool2d(out.gated, 2, 2), tape.param(*down_w), tape.param(*down_b), 1, 1));
  return out;
}

Var fuse_levels(const std::vector<Var>& per_stage) {
  if (per_stage.empty()) throw ShapeError("fuse_levels: no stage features");
  const std::size_t n = per_stage[0].shape().at(0);
  std::vector<Var> pooled;
  for (const Var& v : per_stage) {
    if (v.shape().size() != 4 || v.shape()[0] != n)
      throw ShapeError("fuse_levels: stage feature " + shape_str(v.shape()) +
                       " does not match batch size " + std::to_string(n));
    pooled.push_back(global_avg_pool(v));
  }
  return concat(pooled);
}

WoundModel::WoundModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), init_rng_(seed) {
  config_.validate();
  const auto& ch = config_.stage_channels;
  std::size_t in_c = 3;
  for (std::size_t s = 0; s < ch.size(); ++s) {
    const std::string p = "backbone.stage" + std::to_string(s + 1) + ".";
    Stage st;
    st.conv1_w = add_he(p + "conv1.weight", {ch[s], in_c, 3, 3}, in_c * 9);
    st.bn1 = add_bn(p + "bn1", ch[s]);
    st.conv2_w = add_he(p + "conv2.weight", {ch[s], ch[s], 3, 3}, ch[s] * 9);
    st.bn2 = add_bn(p + "bn2", ch[s]);
    if (in_c != ch[s]) {
      st.proj_w = add_he(p + "shortcut.weight", {ch[s], in_c, 1, 1}, in_c);
      st.proj_b = add_param(p + "shortcut.bias", NdArray::zeros({ch[s]}));
    }
    stages_.push_back(st);
    in_c = ch[s];
  }

  attention_.resize(config_.num_tasks);
  task_params_.resize(config_.num_tasks);
  for (std::size_t t = 0; t < config_.num_tasks; ++t) {
    const std::size_t first = registry_.size();
    const std::string tp = "task." + config_.task_names[t] + ".";
    for (std::size_t s = 0; s < ch.size(); ++s) {
      const std::string p = tp + "attention" + std::to_string(s + 1) + ".";
      const std::size_t in = s == 0 ? ch[s] : 2 * ch[s];
      const std::size_t mid = std::max<std::size_t>(1, ch[s] / config_.attention_reduction);
      AttentionBlock a;
      a.squeeze_w = add_he(p + "squeeze.weight", {mid, in, 1, 1}, in);
      a.squeeze_b = add_param(p + "squeeze.bias", NdArray::zeros({mid}));
      a.expand_w = add_he(p + "expand.weight", {ch[s], mid, 1, 1}, mid);
      a.expand_b = add_param(p + "expand.bias", NdArray::zeros({ch[s]}));
      if (s + 1 < ch.size()) {
        a.down_w = add_he(p + "down.weight", {ch[s + 1], ch[s], 3, 3}, ch[s] * 9);
        a.down_b = add_param(p + "down.bias", NdArray::zeros({ch[s + 1]}));
      }
      attention_[t].push_back(a);
    }
    Head h;
    const std::size_t fw = config_.fused_width(), hid = config_.classifier_hidden;
    h.fc1_w = add_he(tp + "head.fc1.weight", {hid, fw}, fw);
    h.fc1_b = add_param(tp + "head.fc1.bias", NdArray::zeros({hid}));
    h.fc2_w = add_he(tp + "head.fc2.weight", {1, hid}, hid);
    h.fc2_b = add_param(tp + "head.fc2.bias", NdArray::zeros({1}));
    heads_.push_back(h);
    for (std::size_t i = first; i < registry_.size(); ++i) task_params_[t].push_back(&registry_[i]);
  }
}

Parameter* WoundModel::add_param(const std::string& name, NdArray value, bool trainable) {
  for (const auto& p : registry_)
    if (p.name == name) throw ContractError("duplicate parameter name " + name);
  registry_.emplace_back(name, std::move(value), trainable);
  return &registry_.back();
}

Parameter* WoundModel::add_he(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  NdArray v(std::move(shape));
  for (double& x : v.data()) x = uniform(init_rng_, -bound, bound);
  return add_param(name, std::move(v));
}

WoundModel::BnLayer WoundModel::add_bn(const std::string& prefix, std::size_t channels) {
  BnLayer bn;
  bn.gamma = add_param(prefix + ".gamma", NdArray::full({channels}, 1.0));
  bn.beta = add_param(prefix + ".beta", NdArray::zeros({channels}));
  bn.running_mean = add_param(prefix + ".running_mean", NdArray::zeros({channels}), false);
  bn.running_var = add_param(prefix + ".running_var", NdArray::full({channels}, 1.0), false);
  return bn;
}

Var WoundModel::batch_norm(Tape& tape, Var x, const BnLayer& bn, Mode mode,
                           std::vector<BnUpdate>* updates) const {
  ad::BatchStats stats;
  Var y = batch_norm2d(x, tape.param(*bn.gamma), tape.param(*bn.beta), bn.running_mean->value,
                       bn.running_var->value, mode, 1e-5, updates ? &stats : nullptr);
  if (updates && mode == Mode::train) updates->push_back({bn, std::move(stats)});
  return y;
}

Var WoundModel::forward_impl(Tape& tape, const NdArray& batch, Mode mode,
                             std::vector<BnUpdate>* updates, ForwardTrace* trace) const {
  const std::size_t s = config_.input_size;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != s || batch.dim(3) != s)
    throw ShapeError("model forward: expected batch [N,3," + std::to_string(s) + "," +
                     std::to_string(s) + "], got " + shape_str(batch.shape()));

  std::vector<Var> shared;
  Var x = tape.constant(batch);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& st = stages_[i];
    if (i > 0) x = max_pool2d(x, 2, 2);
    const std::size_t c = config_.stage_channels[i];
    const Var zero_bias = tape.constant(NdArray::zeros({c}));
    Var h = relu(batch_norm(tape, conv2d(x, tape.param(*st.conv1_w), zero_bias, 1, 1), st.bn1, mode, updates));
    h = batch_norm(tape, conv2d(h, tape.param(*st.conv2_w), zero_bias, 1, 1), st.bn2, mode, updates);
    const Var shortcut =
        st.proj_w ? conv2d(x, tape.param(*st.proj_w), tape.param(*st.proj_b), 1, 0) : x;
    x = relu(add(h, shortcut));
    shared.push_back(x);
  }

  std::vector<Var> logits;
  if (trace) {
    trace->shared = shared;
    trace->masks.assign(config_.num_tasks, {});
    trace->fused.clear();
  }
  for (std::size_t t = 0; t < config_.num_tasks; ++t) {
    std::vector<Var> gated;
    std::optional<Var> prev;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      auto out = attention_[t][i].apply(tape, shared[i], prev);
      gated.push_back(out.gated);
      prev = out.next;
      if (trace) trace->masks[t].push_back(out.mask);
    }
    const Var fused = fuse_levels(gated);
    if (trace) trace->fused.push_back(fused);
    const Head& h = heads_[t];
    const Var hidden = relu(linear(fused, tape.param(*h.fc1_w), tape.param(*h.fc1_b)));
    logits.push_back(linear(hidden, tape.param(*h.fc2_w), tape.param(*h.fc2_b)));
  }
  Var out = concat(logits);
  if (trace) trace->logits = out;
  return out;
}

Var WoundModel::forward(Tape& tape, const NdArray& batch, Mode mode, ForwardTrace* trace) {
  if (mode == Mode::eval) return std::as_const(*this).forward(tape, batch, trace);
  std::vector<BnUpdate> updates;
  Var out = forward_impl(tape, batch, mode, &updates, trace);
  for (const auto& u : updates) {
    NdArray& rm = u.layer.running_mean->value;
    NdArray& rv = u.layer.running_var->value;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - bn_momentum) * rm[c] + bn_momentum * u.stats.mean[c];
      rv[c] = (1.0 - bn_momentum) * rv[c] + bn_momentum * u.stats.var_unbiased[c];
    }
  }
  return out;
}

Var WoundModel::forward(Tape& tape, const NdArray& batch, ForwardTrace* trace) const {
  return forward_impl(tape, batch, Mode::eval, nullptr, trace);
}

NdArray WoundModel::predict_logits(const NdArray& batch) const {
  Tape tape;
  return forward(tape, batch).value();
}

NdArray WoundModel::predict_proba(const NdArray& batch) const {
  NdArray out = predict_logits(batch);
  for (double& z : out.data()) {
    if (z >= 0) {
      z = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      z = e / (1.0 + e);
    }
  }
  return out;
}

std::vector<Parameter*> WoundModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : registry_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> WoundModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : registry_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> WoundModel::trainable_parameters() {
  std::vector<Parameter*> out;
  for (auto& p : registry_)
    if (p.trainable) out.push_back(&p);
  return out;
}

Parameter& WoundModel::parameter(const std::string& name) {
  for (auto& p : registry_)
    if (p.name == name) return p;
  throw ContractError("no parameter named " + name);
}

const Parameter* WoundModel::find(const std::string& name) const {
  for (const auto& p : registry_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Parameter*> WoundModel::task_parameters(std::size_t t) { return task_params_.at(t); }

std::vector<Parameter*> WoundModel::backbone_parameters() {
  std::vector<Parameter*> out;
  for (auto& p : registry_)
    if (p.name.rfind("backbone.", 0) == 0) out.push_back(&p);
  return out;
}

void WoundModel::zero_grad() {
  for (auto& p : registry_) p.zero_grad();
}

std::size_t count_parameters(const std::vector<const Parameter*>& params) {
  std::size_t n = 0;
  for (const Parameter* p : params)
    if (p->trainable) n += p->value.size();
  return n;
}

std::size_t count_parameters(const WoundModel& model) { return count_parameters(model.parameters()); }

double size_ratio(const WoundModel& a, const WoundModel& b) {
  return static_cast<double>(count_parameters(a)) / static_cast<double>(count_parameters(b));
}

}  // namespace woundnet::model
