#include "gleason/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gleason/errors.hpp"
#include "gleason/ops.hpp"

namespace gleason {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DimensionError("empty dataset subset");
  Shape shape = images.shape();
  const std::size_t per = images.numel() / shape[0];
  shape[0] = indices.size();
  Dataset out{Tensor(shape), {}};
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = images.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * per);
    std::copy(src, src + static_cast<std::ptrdiff_t>(per), out.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

Dataset make_dataset(const std::vector<Image8>& images, const std::vector<int>& labels) {
  if (images.empty() || images.size() != labels.size()) throw InputError("dataset needs matching, non-empty images and labels");
  const Image8& first = images.front();
  Dataset ds{Tensor({images.size(), first.channels, first.height, first.width}), labels};
  const std::size_t per = first.channels * first.height * first.width;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != first.width || images[i].height != first.height || images[i].channels != first.channels) {
      throw InputError("dataset images differ in size");
    }
    const Tensor t = image_to_tensor(images[i]);
    std::copy(t.data().begin(), t.data().end(), ds.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return ds;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"state_matrix_max", c.state_matrix_max},
       {"stop_at_val_acc", c.stop_at_val_acc ? nlohmann::json(*c.stop_at_val_acc) : nlohmann::json(nullptr)},
       {"val_fold", c.val_fold ? nlohmann::json(*c.val_fold) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
  c.state_matrix_max = j.value("state_matrix_max", d.state_matrix_max);
  c.stop_at_val_acc.reset();
  if (j.contains("stop_at_val_acc") && !j["stop_at_val_acc"].is_null()) c.stop_at_val_acc = j["stop_at_val_acc"].get<double>();
  c.val_fold.reset();
  if (j.contains("val_fold") && !j["val_fold"].is_null()) c.val_fold = j["val_fold"].get<int>();
}

void Adam::step(std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].value;
    const Tensor& g = *params[i].grad;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.numel(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t K = logits.dim(1);
  const double* z = logits.data().data() + row * K;
  return static_cast<std::size_t>(std::max_element(z, z + K) - z);
}

}  // namespace

Evaluation evaluate(MedMamba& model, const Dataset& data, std::size_t batch) {
  Evaluation ev;
  const Tensor logits = model.predict(data.images, batch);
  const CrossEntropy ce = cross_entropy(logits, data.labels);
  ev.loss = ce.loss;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int pred = static_cast<int>(argmax_row(logits, i));
    ev.predictions.push_back(pred);
    correct += pred == data.labels[i];
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

StepResult train_step(MedMamba& model, Adam& opt, const Dataset& batch, double state_matrix_max) {
  model.zero_grad();
  StepResult r;
  r.logits = model.forward(batch.images, /*training=*/true);
  const CrossEntropy ce = cross_entropy(r.logits, batch.labels);
  r.loss = ce.loss;
  if (!std::isfinite(ce.loss)) return r;
  model.backward(ce.dlogits);
  auto params = model.params();
  opt.step(params);
  model.clamp_state_matrices(state_matrix_max);
  return r;
}

std::vector<EpochLog> fit(MedMamba& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                          const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.size() == 0) throw InputError("training set is empty");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  Adam opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::mt19937_64 order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochLog> log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const Dataset batch = train.subset(std::span(order).subspan(start, count));
      const StepResult step = train_step(model, opt, batch, cfg.state_matrix_max);
      if (!std::isfinite(step.loss)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch starting at sample " << start
           << " (lr=" << cfg.lr << "); the learning rate is likely too high";
        throw NumericError(os.str());
      }
      loss_sum += step.loss * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) correct += static_cast<int>(argmax_row(step.logits, i)) == batch.labels[i];
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    entry.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (val.size() > 0) {
      const Evaluation ev = evaluate(model, val);
      entry.val_loss = ev.loss;
      entry.val_acc = ev.accuracy;
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!std::isfinite(entry.train_loss) || !std::isfinite(entry.val_loss)) {
      std::ostringstream os;
      os << "non-finite " << (std::isfinite(entry.train_loss) ? "validation" : "training") << " loss after epoch "
         << epoch << " (lr=" << cfg.lr << "); the learning rate is likely too high";
      throw NumericError(os.str());
    }
    if (cfg.stop_at_val_acc && val.size() > 0 && entry.val_acc >= *cfg.stop_at_val_acc) break;
  }
  return log;
}

}  // namespace gleason
