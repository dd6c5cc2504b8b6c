#pragma once

// `gleason` subcommands. Each cmd_* writes into its --out directory, including
// a config.json holding the fully-resolved options, and throws InputError /
// ConfigError for bad input (exit 2) or other exceptions (exit 1).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gleason/pipeline.hpp"
#include "gleason/trainer.hpp"

namespace gleason::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInput = 2;

struct ExtractOptions {
  fs::path images;       // <images>/<image_id>.png
  fs::path annotations;  // <annotations>/<image_id>/expert_<k>.png
  fs::path patients;     // optional image_id,patient_id CSV
  fs::path out;
  std::size_t patch = pipeline::kDefaultPatch;
  std::size_t stride = pipeline::kDefaultStride;
  std::size_t core = pipeline::kDefaultCore;
};

struct ExtractSummary {
  std::size_t images = 0;
  std::size_t skipped = 0;
  std::size_t grid = 0;
  std::size_t discarded = 0;
  std::array<std::size_t, kNumClasses> kept{};
  std::size_t total_kept() const;
};

ExtractSummary cmd_extract(const ExtractOptions& o);

struct SplitOptions {
  fs::path manifest;
  fs::path out;
  double test_frac = 0.2;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  std::size_t folds = 0;  // 0: train/val/test mode
};

std::vector<pipeline::PatchRecord> cmd_split(const SplitOptions& o);

struct TrainOptions {
  fs::path manifest;
  fs::path patches;     // default: <manifest dir>/patches
  fs::path out;
  fs::path checkpoint;  // default: <out>/model.ckpt
  TrainConfig config;
  bool dry_run = false;
};

std::vector<EpochLog> cmd_train(const TrainOptions& o);

struct EvalOptions {
  fs::path manifest;
  fs::path checkpoint;
  fs::path pred_csv;
  fs::path patches;  // default: <manifest dir>/patches
  fs::path out;
  std::string split = "test";  // train|val|test|all
};

nlohmann::json cmd_eval(const EvalOptions& o);

struct SynthOptions {
  fs::path out;
  std::size_t train = 2000;
  std::size_t val = 400;
  std::size_t size = 32;
  std::uint64_t seed = 0;
};

void cmd_synth(const SynthOptions& o);

// Parses argv and dispatches; returns the process exit code.
int run(int argc, char** argv);

}  // namespace gleason::cli
