#include "woundnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "woundnet/errors.hpp"
#include "woundnet/inference.hpp"
#include "woundnet/loss.hpp"
#include "woundnet/metrics.hpp"
#include "woundnet/optim.hpp"

namespace woundnet::train {
namespace {

NdArray label_batch(const std::vector<data::LabelVector>& labels, const std::vector<std::size_t>& rows) {
  NdArray y({rows.size(), data::kNumTasks});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t t = 0; t < data::kNumTasks; ++t) y[r * data::kNumTasks + t] = labels[rows[r]][t];
  return y;
}

nlohmann::json maybe(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("train: epochs must be positive");
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  ad::parse_optimizer(optimizer);
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("train: learning_rate must be positive");
  if (lr_schedule != "constant" && lr_schedule != "cosine")
    throw ValidationError("train: lr_schedule must be constant or cosine");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("train: threshold must be in [0,1]");
  augmentation.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},       {"batch_size", c.batch_size},       {"optimizer", c.optimizer},
                     {"learning_rate", c.learning_rate}, {"lr_schedule", c.lr_schedule}, {"augment", c.augment},
                     {"augmentation", c.augmentation},   {"class_weights", c.class_weights}, {"threshold", c.threshold},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.optimizer = j.value("optimizer", d.optimizer);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.lr_schedule = j.value("lr_schedule", d.lr_schedule);
  c.augment = j.value("augment", d.augment);
  if (j.contains("augmentation")) c.augmentation = j.at("augmentation").get<data::AugmentConfig>();
  c.class_weights = j.value("class_weights", d.class_weights);
  c.threshold = j.value("threshold", d.threshold);
  c.seed = j.value("seed", d.seed);
}

TrainResult train_model(const model::ModelConfig& model_config, const TrainConfig& cfg,
                        const data::DatasetManifest& train_split, const data::DatasetManifest& val_split,
                        const std::filesystem::path& out_dir, std::ostream* progress) {
  model_config.validate();
  cfg.validate();
  if (train_split.size() == 0) throw ValidationError("train: the training split is empty");
  const auto& names = model_config.task_names;
  if (!std::equal(names.begin(), names.end(), data::task_columns().begin(), data::task_columns().end()))
    throw ValidationError("train: model tasks must be deep, infected, arterial, venous, pressure");
  std::filesystem::create_directories(out_dir);

  model::CheckpointMeta meta;
  meta.thresholds.assign(model_config.num_tasks, cfg.threshold);
  meta.extra = {{"train_config", cfg}, {"train_images", train_split.size()}, {"val_images", val_split.size()}};

  const std::size_t size = model_config.input_size;
  const auto train = infer::load_split(train_split, size, meta);
  const auto val = infer::load_split(val_split, size, meta);

  model::ClassWeights weights = model::ClassWeights::uniform(model_config.num_tasks);
  if (cfg.class_weights) {
    std::vector<model::ClassCounts> counts(model_config.num_tasks);
    for (const auto& l : train.labels)
      for (std::size_t t = 0; t < model_config.num_tasks; ++t) (l[t] ? counts[t].positives : counts[t].negatives)++;
    weights = model::compute_class_weights(counts, names);
  }
  meta.extra["class_weights"] = weights;

  model::WoundModel net(model_config, cfg.seed);
  ad::OptimizerState opt;
  opt.kind = ad::parse_optimizer(cfg.optimizer);
  const std::size_t batches = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  if (cfg.lr_schedule == "cosine") {
    opt.schedule.kind = ad::LrSchedule::Kind::cosine;
    opt.schedule.total_steps = cfg.epochs * batches;
  }
  auto params = net.trainable_parameters();

  TrainResult result;
  result.checkpoint = out_dir / "model.wmtc";
  result.log_path = out_dir / "train_log.jsonl";
  std::ofstream log(result.log_path);
  if (!log) throw std::runtime_error("cannot write " + result.log_path.string());

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-order/" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, "augment/" + std::to_string(epoch));

    double loss_sum = 0.0, first_loss = 0.0, last_loss = 0.0;
    const double lr_at_start = opt.schedule.at(cfg.learning_rate, opt.step);
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(train.size(), (b + 1) * cfg.batch_size)));
      std::vector<NdArray> views;
      views.reserve(rows.size());
      for (auto r : rows) {
        if (cfg.augment) {
          Rng rng(derive_seed(epoch_seed, train.image_ids[r]));
          views.push_back(data::augment(train.images[r], cfg.augmentation, rng));
        } else {
          views.push_back(train.images[r]);
        }
      }
      std::vector<const NdArray*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v);

      double loss_value = 0.0;
      try {
        ad::Tape tape;
        const auto logits = net.forward(tape, data::stack(ptrs), ad::Mode::train);
        const auto loss = model::weighted_bce_loss(logits, label_batch(train.labels, rows), weights);
        loss_value = loss.value().item();
        if (!std::isfinite(loss_value)) throw NumericError("loss is " + std::to_string(loss_value));
        tape.backward(loss).write_to(params);
        ad::sgd_adam_step(opt, params, cfg.learning_rate);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                           " of " + std::to_string(batches) + ": " + e.what());
      }
      loss_sum += loss_value * static_cast<double>(rows.size());
      if (b == 0) first_loss = loss_value;
      last_loss = loss_value;
    }

    nlohmann::json entry{{"epoch", epoch},
                         {"train_loss", loss_sum / static_cast<double>(train.size())},
                         {"first_batch_loss", first_loss},
                         {"last_batch_loss", last_loss},
                         {"learning_rate", lr_at_start}};
    std::optional<double> mean_auc;
    if (val.size() > 0) {
      const auto probs = infer::predict(net, val.images);
      nlohmann::json aucs;
      double sum = 0.0;
      std::size_t defined = 0;
      std::vector<double> s(val.size());
      std::vector<std::uint8_t> y(val.size());
      for (std::size_t t = 0; t < model_config.num_tasks; ++t) {
        for (std::size_t i = 0; i < val.size(); ++i) s[i] = probs[i][t], y[i] = val.labels[i][t];
        std::optional<double> a;
        if (std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0) a = eval::auc(s, y);
        aucs[names[t]] = maybe(a);
        if (a) sum += *a, ++defined;
      }
      if (defined > 0) mean_auc = sum / static_cast<double>(defined);
      entry["val_auc"] = aucs;
    }
    entry["mean_val_auc"] = maybe(mean_auc);

    // without any defined validation AUC the latest epoch is kept
    const bool improved = result.best_mean_val_auc ? (mean_auc && *mean_auc > *result.best_mean_val_auc) : true;
    if (improved) {
      result.best_epoch = epoch;
      result.best_mean_val_auc = mean_auc;
      meta.extra["best_epoch"] = epoch;
      meta.extra["best_mean_val_auc"] = maybe(mean_auc);
      model::save_checkpoint(net, meta, result.checkpoint);
    }
    entry["selected"] = result.best_epoch == epoch;
    log << entry.dump() << '\n' << std::flush;
    result.log.push_back(entry);
    if (progress)
      *progress << "epoch " << epoch << "/" << cfg.epochs << " loss " << entry["train_loss"].get<double>()
                << " mean val AUC " << (mean_auc ? std::to_string(*mean_auc) : "NA")
                << (result.best_epoch == epoch ? " (saved)" : "") << std::endl;
  }
  return result;
}

}  // namespace woundnet::train
