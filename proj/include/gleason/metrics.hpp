#pragma once

// Confusion-matrix based classification metrics with support weighting.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gleason::metrics {

// Entry (i, j) counts samples of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k);

  std::size_t classes() const { return k_; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  void add(std::size_t truth, std::size_t pred);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::vector<std::uint64_t> supports() const;  // row sums

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// Throws InputError on length mismatch or a class index outside [0, k).
ConfusionMatrix build_confusion(std::span<const int> preds, std::span<const int> truths, std::size_t k);

// Label tokens (benign/g3/g4/g5); unknown tokens raise InputError naming the
// 1-based row.
ConfusionMatrix build_confusion(std::span<const std::string> preds, std::span<const std::string> truths);

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;  // one-vs-rest
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

// Zero denominators give 0 with the matching flag set.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

struct WeightedSummary {
  std::vector<double> weights;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;          // support-weighted one-vs-rest accuracy
  double overall_accuracy = 0.0;  // trace / total
};

// Throws InputError when the supports sum to zero.
WeightedSummary weighted_average(std::span<const ClassMetrics> per_class, std::span<const std::uint64_t> supports);

// Support-proportional weights; throws InputError on zero total.
std::vector<double> support_weights(std::span<const std::uint64_t> supports);

struct NormalizedMatrix {
  std::size_t k = 0;
  std::vector<double> values;          // row-major
  std::vector<bool> zero_support;      // rows left at zero
};

NormalizedMatrix normalize_rows(const ConfusionMatrix& cm);

// Full report; numbers rounded to 4 decimals. Throws when the matrix is empty.
nlohmann::json report(const ConfusionMatrix& cm, std::span<const std::string> class_names);

std::string counts_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names);
std::string normalized_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names);

// The class names in reporting order.
std::vector<std::string> default_class_names();

}  // namespace gleason::metrics
