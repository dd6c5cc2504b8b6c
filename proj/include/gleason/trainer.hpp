#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "gleason/image.hpp"
#include "gleason/medmamba.hpp"
#include "gleason/tensor.hpp"

namespace gleason {

struct Dataset {
  Tensor images;            // [N, C, H, W]
  std::vector<int> labels;  // class index per image

  std::size_t size() const { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

Dataset make_dataset(const std::vector<Image8>& images, const std::vector<int>& labels);

// Every hyperparameter that influences a training run.
struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // A is clamped to <= this value after each step so the scan keeps decaying.
  double state_matrix_max = -1e-4;
  // Stop once validation accuracy reaches this value (disabled when unset).
  std::optional<double> stop_at_val_acc;
  // Fold-mode manifests: records of this fold form the validation set.
  std::optional<int> val_fold;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

// Eval-mode loss/accuracy over a dataset.
Evaluation evaluate(MedMamba& model, const Dataset& data, std::size_t batch = 64);

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::vector<ParamRef>& params);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Mean cross-entropy minimized with Adam. Single-threaded over the optimizer
// state; identical inputs and seed give bit-identical weights and logs.
// Throws NumericError (after invoking on_epoch for completed epochs) when the
// loss stops being finite.
std::vector<EpochLog> fit(MedMamba& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                          const std::function<void(const EpochLog&)>& on_epoch = {});

struct StepResult {
  double loss = 0.0;
  Tensor logits;
};

// One training-mode forward/backward and optimizer step on one batch. The
// optimizer step is skipped when the loss is not finite.
StepResult train_step(MedMamba& model, Adam& opt, const Dataset& batch, double state_matrix_max);

}  // namespace gleason
