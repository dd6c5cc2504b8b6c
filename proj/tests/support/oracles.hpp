#pragma once

// Independent reference implementations used as test oracles. They are written
// as plainly as possible and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "gleason/grad_check.hpp"
#include "gleason/layers.hpp"
#include "gleason/medmamba.hpp"
#include "gleason/ss2d.hpp"
#include "gleason/tensor.hpp"

namespace oracle {

using gleason::Tensor;

// h = a*h + b*x per (channel, state) lane, y = sum_n C*h + D*x, one step at a time.
inline Tensor naive_scan(const Tensor& A_bar, const Tensor& B_bar, const Tensor& C, const Tensor& D,
                         const Tensor& x) {
  const std::size_t l = x.dim(0), d = x.dim(1), n = C.dim(1);
  Tensor y({l, d});
  std::vector<double> h(d * n, 0.0);
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = D[c] * x[t * d + c];
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t i = (t * d + c) * n + s;
        h[c * n + s] = A_bar[i] * h[c * n + s] + B_bar[i] * x[t * d + c];
        acc += C[t * n + s] * h[c * n + s];
      }
      y[t * d + c] = acc;
    }
  }
  return y;
}

// Explicit per-direction sequences: the grid positions visited by each of the
// four scans, built from nested loops rather than index arithmetic.
inline std::vector<std::vector<std::pair<std::size_t, std::size_t>>> direction_paths(std::size_t H, std::size_t W) {
  std::vector<std::pair<std::size_t, std::size_t>> row, col;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) row.emplace_back(h, w);
  for (std::size_t w = 0; w < W; ++w)
    for (std::size_t h = 0; h < H; ++h) col.emplace_back(h, w);
  auto row_rev = row, col_rev = col;
  std::reverse(row_rev.begin(), row_rev.end());
  std::reverse(col_rev.begin(), col_rev.end());
  return {row, row_rev, col, col_rev};
}

// Materializes each directional sequence from direction_paths, runs the
// library S6 on it, scatters and sums.
inline Tensor brute_force_ss2d(const Tensor& fmap, const gleason::ss2d::Params& params) {
  const std::size_t B = fmap.dim(0), C = fmap.dim(1), H = fmap.dim(2), W = fmap.dim(3);
  const auto paths = direction_paths(H, W);
  Tensor out({B, C, H, W});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t dir = 0; dir < 4; ++dir) {
      Tensor seq({H * W, C});
      for (std::size_t k = 0; k < H * W; ++k)
        for (std::size_t c = 0; c < C; ++c) seq.at({k, c}) = fmap.at({b, c, paths[dir][k].first, paths[dir][k].second});
      const Tensor y = gleason::s6::forward(seq, params.dirs[dir], gleason::s6::ScanMode::sequential);
      for (std::size_t k = 0; k < H * W; ++k)
        for (std::size_t c = 0; c < C; ++c) out.at({b, c, paths[dir][k].first, paths[dir][k].second}) += y.at({k, c});
    }
  }
  return out;
}

// Per-pixel vote counting with a std::map; ties at the top give 255.
inline std::vector<std::uint8_t> vote(const std::vector<std::vector<std::uint8_t>>& maps) {
  std::vector<std::uint8_t> out(maps[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::map<int, int> counts;
    for (const auto& m : maps) counts[m[i]]++;
    int best = -1, top = 0, holders = 0;
    for (auto [code, n] : counts) {
      if (n > top) {
        top = n;
        best = code;
        holders = 1;
      } else if (n == top) {
        ++holders;
      }
    }
    out[i] = holders > 1 ? 255 : static_cast<std::uint8_t>(best);
  }
  return out;
}

struct EnumeratedMetrics {
  std::vector<double> precision, recall, f1, accuracy;
  double overall = 0.0;
};

// Counts TP/FP/FN/TN for every class directly from the sample list.
inline EnumeratedMetrics enumerate_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  EnumeratedMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.overall = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (int c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      tn += !t && !p;
    }
    const double P = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double R = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.precision.push_back(P);
    m.recall.push_back(R);
    m.f1.push_back(P + R > 0 ? 2 * P * R / (P + R) : 0.0);
    m.accuracy.push_back((tp + tn) / static_cast<double>(truth.size()));
  }
  return m;
}

// Wraps a stateful layer (or a whole model) as a DifferentiableOp whose inputs
// are x followed by every parameter in `params`.
inline gleason::DifferentiableOp layer_op(std::string name, std::function<Tensor(const Tensor&)> forward,
                                          std::function<Tensor(const Tensor&)> backward,
                                          std::vector<gleason::ParamRef> params) {
  auto load = [params](std::span<const Tensor> in) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = in[i + 1];
  };
  gleason::DifferentiableOp op;
  op.name = std::move(name);
  op.forward = [=](std::span<const Tensor> in) {
    load(in);
    return forward(in[0]);
  };
  op.backward = [=](std::span<const Tensor> in, const Tensor& u) {
    load(in);
    for (const auto& p : params) p.grad->fill(0.0);
    forward(in[0]);
    std::vector<Tensor> out{backward(u)};
    for (const auto& p : params) out.push_back(*p.grad);
    return out;
  };
  return op;
}

inline std::vector<Tensor> layer_inputs(const Tensor& x, const std::vector<gleason::ParamRef>& params) {
  std::vector<Tensor> in{x};
  for (const auto& p : params) in.push_back(*p.value);
  return in;
}

// Smallest |input| over the block's two ReLUs (training-mode BN). Finite
// differences are only meaningful when this exceeds the probe step.
inline double relu_margin(gleason::SSConvSSMBlock& blk, const Tensor& x) {
  using namespace gleason;
  auto halves = channel_split(x);
  Tensor a = blk.bn1.forward(blk.pw_in.forward(halves.first), true);
  double m = max_abs(a);
  for (double v : a.data()) m = std::min(m, std::abs(v));
  a = blk.bn2.forward(blk.dw.forward(activation(a, Activation::relu)), true);
  for (double v : a.data()) m = std::min(m, std::abs(v));
  return m;
}

}  // namespace oracle
