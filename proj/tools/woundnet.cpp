// Command line front end: synth, train, eval, compare, gradcheck, serve.
#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "woundnet/checkpoint.hpp"
#include "woundnet/errors.hpp"
#include "woundnet/gradsuite.hpp"
#include "woundnet/inference.hpp"
#include "woundnet/reports.hpp"
#include "woundnet/service.hpp"
#include "woundnet/synth.hpp"
#include "woundnet/train.hpp"

using namespace woundnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Invalid flags or configuration; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log_event(const std::string& event, json fields = json::object()) {
  fields["event"] = event;
  fields["ts"] = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  std::cerr << fields.dump() << std::endl;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << s;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  json config = json::object();

  void load() {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot read config " + config_path);
    try {
      config = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config " + config_path + " is not valid JSON: " + e.what());
    }
    if (!config.is_object()) throw UsageError("config " + config_path + " must be a JSON object");
  }
  json section(const std::string& name) const { return config.value(name, json::object()); }
  fs::path out_dir() const {
    if (out.empty()) throw UsageError("--out is required");
    return out;
  }
};

// Config section, then explicit flags; parse failures become usage errors.
template <class T>
T from_section(const Globals& g, const std::string& name) {
  try {
    return g.section(name).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config section '" + name + "': " + e.what());
  }
}

std::vector<std::size_t> parse_channels(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw UsageError("--channels expects comma separated integers, got '" + s + "'");
    }
  }
  return out;
}

fs::path manifest_in(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.csv" : p; }

std::array<double, data::kNumTasks> thresholds_of(const std::vector<double>& v) {
  if (v.size() != data::kNumTasks) throw ValidationError("expected 5 thresholds");
  std::array<double, data::kNumTasks> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"woundnet: multi-task wound image classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config_path, "JSON config with synth/model/train/split/serve sections")
      ->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled wound dataset");
  std::optional<std::size_t> patients, images, width, height;
  std::optional<std::string> format;
  synth->add_option("--patients", patients, "Number of patients");
  synth->add_option("--images", images, "Total images (default: drawn per patient)");
  synth->add_option("--width", width, "Image width");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--format", format, "ppm or png")->check(CLI::IsMember({"ppm", "png"}));

  // train
  auto* train = app.add_subcommand("train", "Split a dataset by patient and train a model");
  std::string data_dir;
  std::optional<std::size_t> epochs, batch, input_size;
  std::optional<double> lr;
  std::optional<std::string> optimizer, channels, schedule;
  std::vector<double> fractions;
  bool no_augment = false, no_weights = false;
  train->add_option("--data", data_dir, "Dataset directory or manifest.csv")->required();
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--batch-size", batch, "Images per batch");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--optimizer", optimizer, "adam or sgd");
  train->add_option("--lr-schedule", schedule, "constant or cosine");
  train->add_option("--input-size", input_size, "Model input side length");
  train->add_option("--channels", channels, "Backbone stage widths, e.g. 8,16,32,64");
  train->add_option("--split", fractions, "train,val,test patient fractions")->expected(3)->delimiter(',');
  train->add_flag("--no-augment", no_augment, "Disable augmentation");
  train->add_flag("--no-class-weights", no_weights, "Plain unweighted BCE");

  // eval
  auto* evalc = app.add_subcommand("eval", "Score a checkpoint on a manifest");
  std::string ckpt_path, eval_manifest;
  std::vector<double> eval_thresholds;
  evalc->add_option("--checkpoint", ckpt_path, "model.wmtc")->required()->check(CLI::ExistingFile);
  evalc->add_option("--manifest", eval_manifest, "Manifest to score (default: test_manifest.csv next to the checkpoint)");
  evalc->add_option("--thresholds", eval_thresholds, "Five per-task thresholds")->expected(5)->delimiter(',');

  // compare
  auto* compare = app.add_subcommand("compare", "Model versus rater agreement with bootstrap CIs");
  std::string probs_path, truth_path, compare_ckpt;
  std::vector<std::string> rater_paths;
  std::size_t n_boot = 2000;
  std::vector<double> compare_thresholds;
  compare->add_option("--probs", probs_path, "Probability CSV from eval")->required()->check(CLI::ExistingFile);
  compare->add_option("--raters", rater_paths, "Rater answer CSVs")->required()->check(CLI::ExistingFile);
  compare->add_option("--truth", truth_path, "Manifest with ground truth")->required();
  compare->add_option("--checkpoint", compare_ckpt, "Take thresholds from this checkpoint");
  compare->add_option("--thresholds", compare_thresholds, "Five per-task thresholds")->expected(5)->delimiter(',');
  compare->add_option("--n-boot", n_boot, "Bootstrap replicates")->check(CLI::PositiveNumber);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and the model");
  std::size_t grad_entries = 4;
  grad->add_option("--model-entries", grad_entries, "Entries sampled per model tensor (0 = all)");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string serve_ckpt, host = "127.0.0.1", cors = "*";
  int port = 8080;
  std::size_t max_mb = 16;
  serve->add_option("--checkpoint", serve_ckpt, "model.wmtc")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value; empty disables");
  serve->add_option("--max-body-mb", max_mb, "Request size limit in MiB");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    g.load();
    const std::uint64_t seed = g.seed.value_or(g.config.value("seed", std::uint64_t{0}));

    if (*synth) {
      auto cfg = from_section<data::SynthConfig>(g, "synth");
      cfg.seed = seed;
      if (patients) cfg.n_patients = *patients;
      if (images) cfg.total_images = *images;
      if (width) cfg.width = *width;
      if (height) cfg.height = *height;
      if (format) cfg.format = *format == "png" ? data::ImageFormat::png : data::ImageFormat::ppm;
      try {
        cfg.validate();
      } catch (const ValidationError& e) {
        throw UsageError(e.what());
      }
      const auto out = g.out_dir();
      const auto r = data::generate_synthetic_dataset(cfg, out);
      log_event("synth.done", {{"out", out.string()}, {"images", r.n_images}, {"patients", cfg.n_patients},
                               {"positive_counts", r.positive_counts}});
    } else if (*train) {
      auto mcfg = from_section<model::ModelConfig>(g, "model");
      auto tcfg = from_section<train::TrainConfig>(g, "train");
      auto split = g.section("split");
      data::SplitSpec spec;
      spec.train = split.value("train", spec.train);
      spec.val = split.value("val", spec.val);
      spec.test = split.value("test", spec.test);
      if (!fractions.empty()) spec.train = fractions[0], spec.val = fractions[1], spec.test = fractions[2];
      spec.seed = derive_seed(seed, "split");
      tcfg.seed = seed;
      if (epochs) tcfg.epochs = *epochs;
      if (batch) tcfg.batch_size = *batch;
      if (lr) tcfg.learning_rate = *lr;
      if (optimizer) tcfg.optimizer = *optimizer;
      if (schedule) tcfg.lr_schedule = *schedule;
      if (no_augment) tcfg.augment = false;
      if (no_weights) tcfg.class_weights = false;
      if (input_size) mcfg.input_size = *input_size;
      if (channels) mcfg.stage_channels = parse_channels(*channels);
      try {
        mcfg.validate();
        tcfg.validate();
      } catch (const ValidationError& e) {
        throw UsageError(e.what());
      }

      const auto out = g.out_dir();
      fs::create_directories(out);
      const auto manifest = data::load_manifest(manifest_in(data_dir));
      const auto splits = data::split_by_patient(manifest, spec);
      data::save_manifest(splits.train, out / "train_manifest.csv");
      data::save_manifest(splits.val, out / "val_manifest.csv");
      data::save_manifest(splits.test, out / "test_manifest.csv");
      log_event("train.split", {{"train_images", splits.train.size()}, {"val_images", splits.val.size()},
                                {"test_images", splits.test.size()}, {"train_patients", splits.train.patients().size()},
                                {"val_patients", splits.val.patients().size()},
                                {"test_patients", splits.test.patients().size()}});
      const auto start = std::chrono::steady_clock::now();
      const auto r = train::train_model(mcfg, tcfg, splits.train, splits.val, out, &std::cerr);
      log_event("train.done",
                {{"checkpoint", r.checkpoint.string()}, {"best_epoch", r.best_epoch},
                 {"best_mean_val_auc", r.best_mean_val_auc ? json(*r.best_mean_val_auc) : json(nullptr)},
                 {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
    } else if (*evalc) {
      const auto ckpt = model::load_checkpoint(ckpt_path);
      fs::path mpath = eval_manifest.empty() ? fs::path(ckpt_path).parent_path() / "test_manifest.csv"
                                             : manifest_in(eval_manifest);
      if (!fs::exists(mpath)) throw UsageError("manifest " + mpath.string() + " not found; pass --manifest");
      const auto manifest = data::load_manifest(mpath);
      const auto ev = infer::evaluate_model(ckpt, manifest, eval_thresholds);
      const fs::path out = g.out.empty() ? fs::path(ckpt_path).parent_path() : fs::path(g.out);
      fs::create_directories(out);
      eval::save_probabilities(ev.probabilities, out / "test_probs.csv");
      write_json(out / "metrics.json", ev.report.to_json());
      write_text(out / "metrics.txt", ev.report.to_text());
      std::cout << ev.report.to_text();
      log_event("eval.done", {{"images", manifest.size()}, {"out", out.string()}});
    } else if (*compare) {
      const auto probs = eval::load_probabilities(probs_path);
      const auto truth_manifest = data::load_manifest(manifest_in(truth_path));
      std::map<std::string, data::LabelVector> truth;
      for (const auto& s : truth_manifest.samples) truth[s.image_id] = s.labels;
      std::vector<eval::RaterRecord> raters;
      for (const auto& p : rater_paths) raters.push_back(eval::load_rater(p));
      std::vector<double> th(data::kNumTasks, 0.5);
      if (!compare_thresholds.empty()) th = compare_thresholds;
      else if (!compare_ckpt.empty()) th = model::load_checkpoint(compare_ckpt).meta.thresholds;
      eval::BootstrapOptions bo;
      bo.n_boot = n_boot;
      bo.seed = seed;
      const auto report = eval::compare_report(probs, truth, raters, thresholds_of(th), bo);
      std::cout << report.to_text();
      if (!g.out.empty()) {
        fs::create_directories(g.out);
        write_json(fs::path(g.out) / "compare.json", report.to_json());
        write_text(fs::path(g.out) / "compare.txt", report.to_text());
      } else {
        std::cout << report.to_json().dump(2) << '\n';
      }
      log_event("compare.done", {{"raters", raters.size()}, {"n_boot", n_boot}});
    } else if (*grad) {
      model::GradSuiteOptions opt;
      opt.seed = seed;
      opt.model_entries = grad_entries;
      const auto entries = model::run_gradient_suite(opt);
      bool ok = true;
      for (const auto& e : entries) {
        std::cout << (e.passed() ? "ok   " : "FAIL ") << e.name << "  max rel error " << e.max_rel_error << " (< "
                  << e.tolerance << ")\n";
        ok = ok && e.passed();
      }
      return ok ? 0 : 1;
    } else if (*serve) {
      auto opts = g.section("serve");
      service::ServerOptions so;
      so.max_body_bytes = (serve->count("--max-body-mb") ? max_mb : opts.value("max_body_mb", max_mb)) << 20;
      so.cors_origin = serve->count("--cors-origin") ? cors : opts.value("cors_origin", cors);
      if (!serve->count("--host")) host = opts.value("host", host);
      if (!serve->count("--port")) port = opts.value("port", port);
      std::optional<service::Predictor> predictor;
      try {
        predictor.emplace(model::load_checkpoint(serve_ckpt));
      } catch (const std::exception& e) {
        log_event("serve.refused", {{"reason", e.what()}});
        return 1;
      }
      static httplib::Server server;
      service::mount(server, *predictor, so);
      std::signal(SIGINT, [](int) { server.stop(); });
      std::signal(SIGTERM, [](int) { server.stop(); });
      log_event("serve.listening", {{"host", host}, {"port", port}, {"model_version", predictor->checkpoint().meta.model_version}});
      if (!server.listen(host, port)) {
        log_event("serve.bind_failed", {{"host", host}, {"port", port}});
        return 1;
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    log_event("error", {{"message", e.what()}});
    return 1;
  }
  return 0;
}
