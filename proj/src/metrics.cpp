#include "gleason/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gleason/errors.hpp"
#include "gleason/medmamba.hpp"

namespace gleason::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {
  if (k == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred) {
  if (truth >= k_ || pred >= k_) throw InputError("class index out of range");
  ++at(truth, pred);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DimensionError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

std::vector<std::uint64_t> ConfusionMatrix::supports() const {
  std::vector<std::uint64_t> s(k_, 0);
  for (std::size_t i = 0; i < k_; ++i)
    for (std::size_t j = 0; j < k_; ++j) s[i] += at(i, j);
  return s;
}

ConfusionMatrix build_confusion(std::span<const int> preds, std::span<const int> truths, std::size_t k) {
  if (preds.size() != truths.size()) {
    throw InputError("prediction count " + std::to_string(preds.size()) + " != label count " +
                     std::to_string(truths.size()));
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || truths[i] < 0 || static_cast<std::size_t>(preds[i]) >= k ||
        static_cast<std::size_t>(truths[i]) >= k) {
      throw InputError("row " + std::to_string(i + 1) + ": class index out of range");
    }
    cm.add(static_cast<std::size_t>(truths[i]), static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

ConfusionMatrix build_confusion(std::span<const std::string> preds, std::span<const std::string> truths) {
  if (preds.size() != truths.size()) throw InputError("prediction and label lists differ in length");
  ConfusionMatrix cm(kNumClasses);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = parse_label(preds[i]);
    if (!p) throw InputError("row " + std::to_string(i + 1) + ": unknown predicted label '" + preds[i] + "'");
    const auto t = parse_label(truths[i]);
    if (!t) throw InputError("row " + std::to_string(i + 1) + ": unknown true label '" + truths[i] + "'");
    cm.add(static_cast<std::size_t>(*t), static_cast<std::size_t>(*p));
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  const std::uint64_t total = cm.total();
  std::vector<ClassMetrics> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics& m = out[c];
    m.tp = cm.at(c, c);
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      m.fp += cm.at(o, c);
      m.fn += cm.at(c, o);
    }
    m.tn = total - m.tp - m.fp - m.fn;
    m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
    m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
    const double pr = m.precision + m.recall;
    m.f1_undefined = pr == 0.0;
    m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / pr;
    bool acc_undefined = false;
    m.accuracy = ratio(m.tp + m.tn, total, acc_undefined);
  }
  return out;
}

std::vector<double> support_weights(std::span<const std::uint64_t> supports) {
  const std::uint64_t total = std::accumulate(supports.begin(), supports.end(), std::uint64_t{0});
  if (total == 0) throw InputError("cannot weight metrics: total support is zero");
  std::vector<double> w(supports.size());
  for (std::size_t i = 0; i < supports.size(); ++i)
    w[i] = static_cast<double>(supports[i]) / static_cast<double>(total);
  return w;
}

WeightedSummary weighted_average(std::span<const ClassMetrics> per_class, std::span<const std::uint64_t> supports) {
  if (per_class.size() != supports.size()) throw DimensionError("metrics and supports differ in class count");
  WeightedSummary s;
  s.weights = support_weights(supports);
  std::uint64_t tp = 0, total = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const double w = s.weights[c];
    s.precision += w * per_class[c].precision;
    s.recall += w * per_class[c].recall;
    s.f1 += w * per_class[c].f1;
    s.accuracy += w * per_class[c].accuracy;
    tp += per_class[c].tp;
    total += supports[c];
  }
  s.overall_accuracy = static_cast<double>(tp) / static_cast<double>(total);
  return s;
}

NormalizedMatrix normalize_rows(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  NormalizedMatrix n{k, std::vector<double>(k * k, 0.0), std::vector<bool>(k, false)};
  const auto sup = cm.supports();
  for (std::size_t i = 0; i < k; ++i) {
    if (sup[i] == 0) {
      n.zero_support[i] = true;
      continue;
    }
    for (std::size_t j = 0; j < k; ++j)
      n.values[i * k + j] = static_cast<double>(cm.at(i, j)) / static_cast<double>(sup[i]);
  }
  return n;
}

std::vector<std::string> default_class_names() {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < kNumClasses; ++c) names.emplace_back(label_name(static_cast<ClassLabel>(c)));
  return names;
}

nlohmann::json report(const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  if (class_names.size() != cm.classes()) throw DimensionError("class name count != matrix size");
  if (cm.total() == 0) throw InputError("cannot score an empty prediction set");
  const auto pc = per_class_metrics(cm);
  const auto sup = cm.supports();
  const auto ws = weighted_average(pc, sup);

  nlohmann::json j;
  j["num_samples"] = cm.total();
  auto& classes = j["per_class"] = nlohmann::json::array();
  nlohmann::json flags = nlohmann::json::array();
  for (std::size_t c = 0; c < pc.size(); ++c) {
    const auto& m = pc[c];
    classes.push_back({{"class", class_names[c]},
                       {"support", sup[c]},
                       {"tp", m.tp},
                       {"fp", m.fp},
                       {"fn", m.fn},
                       {"tn", m.tn},
                       {"precision", round4(m.precision)},
                       {"recall", round4(m.recall)},
                       {"f1", round4(m.f1)},
                       {"accuracy", round4(m.accuracy)},
                       {"weight", round4(ws.weights[c])},
                       {"precision_undefined", m.precision_undefined},
                       {"recall_undefined", m.recall_undefined},
                       {"f1_undefined", m.f1_undefined}});
    if (m.precision_undefined) flags.push_back(class_names[c] + ": precision undefined (no predictions)");
    if (m.recall_undefined) flags.push_back(class_names[c] + ": recall undefined (no support)");
  }
  j["weighted"] = {{"precision", round4(ws.precision)},
                   {"recall", round4(ws.recall)},
                   {"f1", round4(ws.f1)},
                   {"accuracy_one_vs_rest", round4(ws.accuracy)}};
  j["overall_accuracy"] = round4(ws.overall_accuracy);
  j["flags"] = flags;
  return j;
}

std::string counts_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& n : class_names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    os << class_names[i];
    for (std::size_t j = 0; j < cm.classes(); ++j) os << ',' << cm.at(i, j);
    os << '\n';
  }
  return os.str();
}

std::string normalized_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  const auto n = normalize_rows(cm);
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& name : class_names) os << ',' << name;
  os << ",zero_support\n";
  char buf[32];
  for (std::size_t i = 0; i < n.k; ++i) {
    os << class_names[i];
    for (std::size_t j = 0; j < n.k; ++j) {
      std::snprintf(buf, sizeof buf, "%.4f", n.values[i * n.k + j]);
      os << ',' << buf;
    }
    os << ',' << (n.zero_support[i] ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace gleason::metrics
