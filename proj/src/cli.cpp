#include "gleason/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "gleason/csv.hpp"
#include "gleason/errors.hpp"
#include "gleason/metrics.hpp"
#include "gleason/synthetic.hpp"

namespace gleason::cli {

namespace {

using nlohmann::json;
using pipeline::PatchRecord;
using pipeline::Split;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fmt6(double v) {
  char buf[400];  // %.6f of DBL_MAX is 316 chars
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t k = logits.shape()[1];
  const auto d = logits.data().subspan(row * k, k);
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

fs::path default_patches(const fs::path& patches, const fs::path& manifest) {
  return patches.empty() ? manifest.parent_path() / "patches" : patches;
}

// Reads <dir>/<patch_id>.png, downsampled to the model input size.
Dataset load_patches(std::span<const PatchRecord> records, const fs::path& dir, const ModelConfig& model) {
  std::vector<Image8> images;
  std::vector<int> labels;
  images.reserve(records.size());
  for (const auto& r : records) {
    const fs::path p = dir / (r.patch_id + ".png");
    Image8 img = read_png(p.string(), model.in_channels);
    if (img.width != img.height || img.width % model.input_size != 0) {
      throw InputError(p.string() + ": " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                       " patch cannot be reduced to the model input size " + std::to_string(model.input_size));
    }
    const std::size_t factor = img.width / model.input_size;
    images.push_back(factor == 1 ? std::move(img) : downsample(img, factor));
    labels.push_back(static_cast<int>(r.label));
  }
  return make_dataset(images, labels);
}

std::vector<std::string> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string support_table(std::span<const PatchRecord> records) {
  const auto sup = pipeline::split_supports(records);
  std::string s = "split      benign      g3      g4      g5   total\n";
  char buf[128];
  for (const auto& [split, counts] : sup) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    const std::string name = split == Split::none ? "(none)" : std::string(pipeline::split_name(split));
    std::snprintf(buf, sizeof buf, "%-8s %8zu %7zu %7zu %7zu %7zu\n", name.c_str(), counts[0], counts[1], counts[2],
                  counts[3], total);
    s += buf;
  }
  return s;
}

}  // namespace

std::size_t ExtractSummary::total_kept() const {
  std::size_t t = 0;
  for (auto k : kept) t += k;
  return t;
}

ExtractSummary cmd_extract(const ExtractOptions& o) {
  if (o.annotations.empty() || !fs::is_directory(o.annotations)) {
    throw InputError("annotation directory not found: " + o.annotations.string());
  }
  if (o.images.empty() || !fs::is_directory(o.images)) throw InputError("image directory not found: " + o.images.string());
  if (o.core > o.patch) throw ConfigError("--core must not exceed --patch-size");

  // image_id -> expert files
  std::vector<std::pair<std::string, std::vector<fs::path>>> work;
  for (const auto& id : sorted_entries(o.annotations, true)) {
    std::vector<fs::path> experts;
    for (const auto& f : sorted_entries(o.annotations / id, false)) {
      if (f.rfind("expert_", 0) == 0 && fs::path(f).extension() == ".png") experts.push_back(o.annotations / id / f);
    }
    if (!experts.empty()) work.emplace_back(id, std::move(experts));
  }
  if (work.empty()) throw InputError("no annotation maps (<image_id>/expert_<k>.png) under " + o.annotations.string());

  std::map<std::string, std::string> patient_of;
  if (!o.patients.empty()) {
    patient_of = pipeline::read_patient_map(o.patients.string());
  } else if (fs::exists(o.annotations / "patients.csv")) {
    patient_of = pipeline::read_patient_map((o.annotations / "patients.csv").string());
  }

  ensure_dir(o.out);
  const fs::path patch_dir = o.out / "patches";
  ensure_dir(patch_dir);

  ExtractSummary sum;
  std::vector<PatchRecord> records;
  for (const auto& [id, experts] : work) {
    Image8 rgb;
    std::vector<pipeline::AnnotationMap> maps;
    try {
      rgb = read_png((o.images / (id + ".png")).string(), 3);
      for (const auto& e : experts) {
        maps.push_back(pipeline::AnnotationMap::from_image(read_png(e.string(), 1), e.stem().string()));
        if (maps.back().width != rgb.width || maps.back().height != rgb.height) {
          throw InputError(e.string() + " does not match the image size");
        }
      }
    } catch (const InputError& err) {
      spdlog::warn("skipping image {}: {}", id, err.what());
      ++sum.skipped;
      continue;
    }
    const auto consensus = pipeline::majority_vote(maps);
    const auto it = patient_of.find(id);
    const std::string patient = it == patient_of.end() ? id : it->second;
    auto res = pipeline::extract_patches(consensus, id, patient, o.patch, o.stride, o.core);
    ++sum.images;
    sum.grid += res.grid_size;
    sum.discarded += res.discarded;
    for (auto& r : res.kept) {
      write_png((patch_dir / (r.patch_id + ".png")).string(), rgb.crop(r.x, r.y, o.patch, o.patch));
      ++sum.kept[static_cast<std::size_t>(r.label)];
      records.push_back(std::move(r));
    }
    spdlog::info("{}: {} positions, {} kept, {} discarded", id, res.grid_size, res.kept.size(), res.discarded);
  }
  pipeline::sort_records(records);
  pipeline::write_manifest((o.out / "manifest.csv").string(), records);
  write_json(o.out / "config.json", {{"command", "extract"},
                                     {"images", o.images.string()},
                                     {"annotations", o.annotations.string()},
                                     {"patients", o.patients.string()},
                                     {"patch_size", o.patch},
                                     {"stride", o.stride},
                                     {"core", o.core}});

  std::cout << "images " << sum.images << " (skipped " << sum.skipped << "), positions " << sum.grid << ", kept "
            << sum.total_kept() << ", discarded " << sum.discarded << "\n";
  for (std::size_t c = 0; c < kNumClasses; ++c)
    std::cout << "  " << label_name(static_cast<ClassLabel>(c)) << ": " << sum.kept[c] << "\n";
  if (sum.total_kept() == 0) throw std::runtime_error("no patches kept; check the annotations and patch geometry");
  return sum;
}

std::vector<PatchRecord> cmd_split(const SplitOptions& o) {
  auto records = pipeline::read_manifest(o.manifest.string());
  if (records.empty()) throw InputError(o.manifest.string() + " has no patches");
  const auto plan = o.folds > 0 ? pipeline::assign_folds(records, o.folds, o.seed, o.test_frac)
                                : pipeline::split_by_patient(records, o.test_frac, o.val_frac, o.seed);
  pipeline::apply_plan(records, plan);
  ensure_dir(o.out);
  pipeline::write_manifest((o.out / "manifest.csv").string(), records);
  write_json(o.out / "config.json", {{"command", "split"},
                                     {"manifest", o.manifest.string()},
                                     {"test_frac", o.test_frac},
                                     {"val_frac", o.val_frac},
                                     {"seed", o.seed},
                                     {"folds", o.folds}});
  std::cout << support_table(records);
  return records;
}

std::vector<EpochLog> cmd_train(const TrainOptions& o) {
  const TrainConfig& cfg = o.config;
  cfg.model.validate();
  ensure_dir(o.out);
  const fs::path ckpt = o.checkpoint.empty() ? o.out / "model.ckpt" : o.checkpoint;
  const fs::path patches = default_patches(o.patches, o.manifest);
  json resolved = cfg;
  resolved["command"] = "train";
  resolved["manifest"] = o.manifest.string();
  resolved["patches"] = patches.string();
  write_json(o.out / "config.json", resolved);

  if (o.dry_run) {
    for (const auto& step : shape_trace(cfg.model)) std::cout << step.layer << " " << shape_str(step.shape) << "\n";
    return {};
  }

  const auto records = pipeline::read_manifest(o.manifest.string());
  std::vector<PatchRecord> train, val;
  for (const auto& r : records) {
    if (cfg.val_fold) {
      if (!r.fold) continue;
      (*r.fold == *cfg.val_fold ? val : train).push_back(r);
    } else if (r.split == Split::train) {
      train.push_back(r);
    } else if (r.split == Split::val) {
      val.push_back(r);
    }
  }
  if (train.empty()) throw InputError(o.manifest.string() + ": no training patches (run `gleason split` first)");
  if (val.empty()) throw InputError(o.manifest.string() + ": no validation patches");

  MedMamba model(cfg.model, cfg.seed);
  std::ofstream log(o.out / "epochs.csv", std::ios::binary);
  if (!log) throw InputError("cannot write " + (o.out / "epochs.csv").string());
  log << "epoch,train_loss,train_acc,val_loss,val_acc\n" << std::flush;

  std::vector<EpochLog> history;
  if (cfg.epochs > 0) {
    const Dataset train_ds = load_patches(train, patches, cfg.model);
    const Dataset val_ds = load_patches(val, patches, cfg.model);
    spdlog::info("training on {} patches, validating on {}", train_ds.size(), val_ds.size());
    history = fit(model, train_ds, val_ds, cfg, [&](const EpochLog& e) {
      log << e.epoch << ',' << fmt6(e.train_loss) << ',' << fmt6(e.train_acc) << ',' << fmt6(e.val_loss) << ','
          << fmt6(e.val_acc) << '\n'
          << std::flush;
      spdlog::info("epoch {}: train loss {:.4f} acc {:.4f}, val loss {:.4f} acc {:.4f}", e.epoch, e.train_loss,
                   e.train_acc, e.val_loss, e.val_acc);
    });
  }
  save_checkpoint(ckpt.string(), model.to_checkpoint());
  std::cout << "checkpoint " << ckpt.string() << " after " << history.size() << " epoch(s)\n";
  return history;
}

nlohmann::json cmd_eval(const EvalOptions& o) {
  if (o.checkpoint.empty() == o.pred_csv.empty()) throw ConfigError("give exactly one of --checkpoint or --pred-csv");
  std::optional<Split> only;
  if (o.split != "all") {
    only = pipeline::parse_split(o.split);
    if (!only || *only == Split::none) throw ConfigError("--split must be train, val, test or all");
  }
  const auto all = pipeline::read_manifest(o.manifest.string());
  std::vector<PatchRecord> records;
  for (const auto& r : all)
    if (!only || r.split == *only) records.push_back(r);
  if (records.empty()) throw InputError(o.manifest.string() + ": no patches in split '" + o.split + "'");

  std::vector<std::string> truth, pred;
  for (const auto& r : records) truth.emplace_back(label_name(r.label));

  if (!o.pred_csv.empty()) {
    const std::string path = o.pred_csv.string();
    const csv::Table t = csv::read(path);
    const std::size_t ci = csv::column(t, "patch_id", path);
    const std::size_t cl = csv::column(t, "predicted_label", path);
    std::map<std::string, std::string> by_id;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      const std::string where = path + ":" + std::to_string(t.line_numbers[i]);
      if (row.size() <= std::max(ci, cl)) throw InputError(where + ": too few fields");
      if (!parse_label(row[cl])) {
        throw InputError(where + ": unknown label '" + row[cl] + "' (expected benign, g3, g4 or g5)");
      }
      if (!by_id.emplace(row[ci], row[cl]).second) throw InputError(where + ": duplicate patch_id " + row[ci]);
    }
    std::vector<std::string> missing;
    for (const auto& r : records) {
      const auto it = by_id.find(r.patch_id);
      if (it == by_id.end()) {
        missing.push_back(r.patch_id);
      } else {
        pred.push_back(it->second);
      }
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " patch(es) have no prediction in " + path + ":";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
      if (missing.size() > 20) msg += " ...";
      throw InputError(msg);
    }
  } else {
    if (!fs::exists(o.checkpoint)) throw InputError("checkpoint not found: " + o.checkpoint.string());
    MedMamba model = MedMamba::from_checkpoint(load_checkpoint(o.checkpoint.string()));
    const Dataset ds = load_patches(records, default_patches(o.patches, o.manifest), model.config());
    const Tensor logits = model.predict(ds.images);
    for (std::size_t i = 0; i < records.size(); ++i)
      pred.emplace_back(label_name(static_cast<ClassLabel>(argmax_row(logits, i))));
  }

  const auto cm = metrics::build_confusion(pred, truth);
  const auto names = metrics::default_class_names();
  json j = metrics::report(cm, names);
  j["split"] = o.split;
  j["source"] = o.pred_csv.empty() ? "checkpoint" : "pred_csv";

  ensure_dir(o.out);
  write_json(o.out / "metrics.json", j);
  write_text(o.out / "confusion_counts.csv", metrics::counts_csv(cm, names));
  write_text(o.out / "confusion_normalized.csv", metrics::normalized_csv(cm, names));
  std::string preds = "patch_id,predicted_label\n";
  for (std::size_t i = 0; i < records.size(); ++i) preds += records[i].patch_id + "," + pred[i] + "\n";
  write_text(o.out / "predictions.csv", preds);
  write_json(o.out / "config.json", {{"command", "eval"},
                                     {"manifest", o.manifest.string()},
                                     {"checkpoint", o.checkpoint.string()},
                                     {"pred_csv", o.pred_csv.string()},
                                     {"split", o.split}});
  std::cout << "weighted precision " << j["weighted"]["precision"] << ", recall " << j["weighted"]["recall"]
            << ", f1 " << j["weighted"]["f1"] << ", overall accuracy " << j["overall_accuracy"] << "\n";
  return j;
}

void cmd_synth(const SynthOptions& o) {
  if (o.train == 0 || o.size == 0) throw ConfigError("--train and --size must be positive");
  ensure_dir(o.out);
  ensure_dir(o.out / "patches");
  std::vector<PatchRecord> records;
  auto emit = [&](std::size_t count, std::uint64_t seed, Split split, const char* tag) {
    if (count == 0) return;
    const auto set = synth::texture_patches(count, o.size, seed);
    for (std::size_t i = 0; i < count; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "synth_%s_%05zu", tag, i);
      write_png((o.out / "patches" / (std::string(id) + ".png")).string(), set.images[i]);
      records.push_back({id, id, id, 0, 0, static_cast<ClassLabel>(set.labels[i]), split, std::nullopt});
    }
  };
  emit(o.train, o.seed, Split::train, "train");
  emit(o.val, o.seed + 0x5851f42d4c957f2dULL, Split::val, "val");
  pipeline::write_manifest((o.out / "manifest.csv").string(), records);
  write_json(o.out / "config.json",
             {{"command", "synth"}, {"train", o.train}, {"val", o.val}, {"size", o.size}, {"seed", o.seed}});
  std::cout << "wrote " << records.size() << " patches to " << o.out.string() << "\n";
}

// ---- argument parsing --------------------------------------------------------

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gleason");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("GLEASON_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

// Options that can also come from the --config JSON file (key = long flag name
// with '-' replaced by '_'). Values on the command line win.
class ConfigBinder {
 public:
  explicit ConfigBinder(CLI::App* app) : app_(app) {
    app_->add_option("--config", path_, "JSON file with option values")->check(CLI::ExistingFile);
  }

  template <typename T>
  CLI::Option* bind(const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option(flag, target, help)->capture_default_str();
    std::string key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    setters_.push_back([opt, key, &target](const nlohmann::json& j) {
      if (opt->count() == 0 && j.contains(key)) target = j.at(key).get<T>();
    });
    return opt;
  }

  bool given(const std::string& flag) const { return app_->count(flag) > 0; }

  // Loads the file (if any), applies it to unset options and returns it.
  nlohmann::json apply() const {
    if (path_.empty()) return nlohmann::json::object();
    std::ifstream is(path_);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path_ + ": " + e.what());
    }
    if (!j.is_object()) throw InputError(path_ + ": expected a JSON object");
    try {
      for (const auto& s : setters_) s(j);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path_ + ": " + e.what());
    }
    return j;
  }

 private:
  CLI::App* app_;
  std::string path_;
  std::vector<std::function<void(const nlohmann::json&)>> setters_;
};

}  // namespace

int run(int argc, char** argv) {
  setup_logging();
  CLI::App app{"MedMamba Gleason grading: patch extraction, splitting, training and scoring", "gleason"};
  app.require_subcommand(1);

  std::string images, annotations, patients, manifest, out, checkpoint, pred_csv, patches;

  ExtractOptions ex;
  auto* extract = app.add_subcommand("extract", "cut labeled patches from annotated images");
  ConfigBinder ex_cfg(extract);
  ex_cfg.bind("--images", images, "directory of <image_id>.png")->required();
  ex_cfg.bind("--annotations", annotations, "directory of <image_id>/expert_<k>.png")->required();
  ex_cfg.bind("--patients", patients, "CSV image_id,patient_id");
  ex_cfg.bind("--out", out, "output directory")->required();
  ex_cfg.bind("--patch-size", ex.patch, "patch edge in pixels");
  ex_cfg.bind("--stride", ex.stride, "grid stride in pixels");
  ex_cfg.bind("--core", ex.core, "central labeling region edge");

  SplitOptions sp;
  auto* split = app.add_subcommand("split", "assign patients to train/val/test or folds");
  ConfigBinder sp_cfg(split);
  sp_cfg.bind("--manifest", manifest, "input manifest CSV")->required();
  sp_cfg.bind("--out", out, "output directory")->required();
  sp_cfg.bind("--test-frac", sp.test_frac, "fraction of patches held out for test");
  sp_cfg.bind("--val-frac", sp.val_frac, "fraction of remaining patches for validation");
  sp_cfg.bind("--seed", sp.seed, "shuffle seed");
  sp_cfg.bind("--folds", sp.folds, "number of cross-validation folds (0 = plain split)");

  TrainOptions tr;
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 0, tr_batch = 0;
  double tr_lr = 0.0;
  int tr_fold = 0;
  auto* train = app.add_subcommand("train", "train MedMamba on a split manifest");
  std::string train_cfg_path;
  train->add_option("--config", train_cfg_path, "JSON training config")->check(CLI::ExistingFile);
  train->add_option("--manifest", manifest, "split manifest CSV")->required();
  train->add_option("--patches", patches, "patch PNG directory (default: <manifest dir>/patches)");
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--checkpoint", checkpoint, "checkpoint path (default: <out>/model.ckpt)");
  train->add_option("--seed", tr_seed, "seed for initialization and shuffling");
  train->add_option("--epochs", tr_epochs, "number of epochs");
  train->add_option("--batch-size", tr_batch, "minibatch size");
  train->add_option("--lr", tr_lr, "Adam learning rate");
  train->add_option("--val-fold", tr_fold, "use this fold as validation (fold manifests)");
  train->add_flag("--dry-run", tr.dry_run, "print the layer shapes and exit");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "score a checkpoint or a prediction CSV");
  ConfigBinder ev_cfg(eval);
  ev_cfg.bind("--manifest", manifest, "manifest CSV with labels")->required();
  ev_cfg.bind("--checkpoint", checkpoint, "model checkpoint");
  ev_cfg.bind("--pred-csv", pred_csv, "CSV patch_id,predicted_label");
  ev_cfg.bind("--patches", patches, "patch PNG directory (default: <manifest dir>/patches)");
  ev_cfg.bind("--out", out, "output directory")->required();
  ev_cfg.bind("--split", ev.split, "records to score: train, val, test or all");

  SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "generate the 4-class texture dataset");
  ConfigBinder sy_cfg(synth);
  sy_cfg.bind("--out", out, "output directory")->required();
  sy_cfg.bind("--train", sy.train, "training patches");
  sy_cfg.bind("--val", sy.val, "validation patches");
  sy_cfg.bind("--size", sy.size, "patch edge in pixels");
  sy_cfg.bind("--seed", sy.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (extract->parsed()) {
      ex_cfg.apply();
      ex.images = images;
      ex.annotations = annotations;
      ex.patients = patients;
      ex.out = out;
      cmd_extract(ex);
    } else if (split->parsed()) {
      sp_cfg.apply();
      sp.manifest = manifest;
      sp.out = out;
      cmd_split(sp);
    } else if (train->parsed()) {
      if (!train_cfg_path.empty()) {
        std::ifstream is(train_cfg_path);
        try {
          tr.config = nlohmann::json::parse(is).get<TrainConfig>();
        } catch (const nlohmann::json::exception& e) {
          throw InputError(train_cfg_path + ": " + e.what());
        }
      }
      if (train->count("--seed")) tr.config.seed = tr_seed;
      if (train->count("--epochs")) tr.config.epochs = tr_epochs;
      if (train->count("--batch-size")) tr.config.batch_size = tr_batch;
      if (train->count("--lr")) tr.config.lr = tr_lr;
      if (train->count("--val-fold")) tr.config.val_fold = tr_fold;
      tr.manifest = manifest;
      tr.patches = patches;
      tr.out = out;
      tr.checkpoint = checkpoint;
      cmd_train(tr);
    } else if (eval->parsed()) {
      ev_cfg.apply();
      ev.manifest = manifest;
      ev.checkpoint = checkpoint;
      ev.pred_csv = pred_csv;
      ev.patches = patches;
      ev.out = out;
      cmd_eval(ev);
    } else if (synth->parsed()) {
      sy_cfg.apply();
      sy.out = out;
      cmd_synth(sy);
    }
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace gleason::cli
