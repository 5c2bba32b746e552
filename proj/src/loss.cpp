#include "woundnet/loss.hpp"

#include <cmath>

#include "woundnet/errors.hpp"

namespace woundnet::model {
namespace {

double softplus_term(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(const NdArray& z, const NdArray& labels) {
  if (z.rank() != 2) throw ShapeError("bce loss: logits must be [N,T], got " + shape_str(z.shape()));
  if (labels.shape() != z.shape())
    throw ShapeError("bce loss: labels " + shape_str(labels.shape()) + " vs logits " +
                     shape_str(z.shape()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw ValidationError("bce loss: label at flat index " + std::to_string(i) +
                            " is " + std::to_string(labels[i]) + ", expected 0 or 1");
}

}  // namespace

ClassWeights ClassWeights::scaled(double k) const {
  ClassWeights out = *this;
  for (auto& t : out.tasks) {
    t.neg *= k;
    t.pos *= k;
  }
  return out;
}

void to_json(nlohmann::json& j, const ClassWeights& w) {
  j = nlohmann::json::array();
  for (const auto& t : w.tasks) j.push_back({{"neg", t.neg}, {"pos", t.pos}});
}

ClassWeights compute_class_weights(const std::vector<ClassCounts>& counts,
                                   const std::vector<std::string>& task_names) {
  ClassWeights out;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const auto& c = counts[t];
    if (c.positives == 0 || c.negatives == 0) {
      const std::string name = t < task_names.size() ? task_names[t] : "#" + std::to_string(t);
      throw ValidationError("task '" + name + "' has no " +
                            (c.positives == 0 ? std::string("positive") : std::string("negative")) +
                            " training images; regenerate data with `synth` or disable the task");
    }
    const double total = static_cast<double>(c.positives + c.negatives);
    out.tasks.push_back({total / (2.0 * static_cast<double>(c.negatives)),
                         total / (2.0 * static_cast<double>(c.positives))});
  }
  return out;
}

ad::Var weighted_bce_loss(ad::Var logits, const NdArray& labels, const ClassWeights& weights) {
  const NdArray& z = logits.value();
  check_labels(z, labels);
  const std::size_t n = z.dim(0), t = z.dim(1);
  if (weights.tasks.size() != t)
    throw ShapeError("weighted bce: " + std::to_string(weights.tasks.size()) +
                     " task weights for " + std::to_string(t) + " logit columns");
  NdArray w(z.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < t; ++k)
      w[i * t + k] = labels[i * t + k] == 1.0 ? weights.tasks[k].pos : weights.tasks[k].neg;

  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += w[i] * softplus_term(z[i], labels[i]);
  const double inv = 1.0 / static_cast<double>(z.size());
  return logits.tape()->record(
      "weighted_bce", NdArray::scalar(total * inv), {logits},
      [logits, labels, w, inv](const NdArray& g, std::vector<NdArray*>& gin) {
        if (!gin[0]) return;
        const NdArray& z = logits.value();
        for (std::size_t i = 0; i < z.size(); ++i)
          (*gin[0])[i] += g[0] * inv * w[i] * (sigmoid(z[i]) - labels[i]);
      });
}

ad::Var bce_loss(ad::Var logits, const NdArray& labels) {
  const NdArray& z = logits.value();
  check_labels(z, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += softplus_term(z[i], labels[i]);
  const double inv = 1.0 / static_cast<double>(z.size());
  return logits.tape()->record("bce", NdArray::scalar(total * inv), {logits},
                               [logits, labels, inv](const NdArray& g, std::vector<NdArray*>& gin) {
                                 if (!gin[0]) return;
                                 const NdArray& z = logits.value();
                                 for (std::size_t i = 0; i < z.size(); ++i)
                                   (*gin[0])[i] += g[0] * inv * (sigmoid(z[i]) - labels[i]);
                               });
}

}  // namespace woundnet::model
