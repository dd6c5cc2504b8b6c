#include "gleason/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gleason/errors.hpp"

namespace gleason {

namespace {

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1 << 15;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_rank(W, 2, "linear weight");
  if (x.rank() == 0) throw DimensionError("linear: input has rank 0");
  const std::size_t din = W.dim(0);
  const std::size_t dout = W.dim(1);
  if (x.shape().back() != din) {
    throw DimensionError("linear: input last axis (" + std::to_string(x.shape().back()) +
                         ") != weight axis 0 (" + std::to_string(din) + ")");
  }
  if (!b.empty() && (b.rank() != 1 || b.dim(0) != dout)) {
    throw DimensionError("linear: bias shape " + shape_str(b.shape()) + " != weight axis 1 (" +
                         std::to_string(dout) + ")");
  }
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor y(out_shape);
  const std::size_t rows = x.numel() / din;
  const double* xp = x.data().data();
  const double* wp = W.data().data();
  double* yp = y.data().data();
  const bool has_bias = !b.empty();
#pragma omp parallel for schedule(static) if (rows * din * dout > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = yp + r * dout;
    if (has_bias) {
      for (std::size_t j = 0; j < dout; ++j) yr[j] = b[j];
    }
    const double* xr = xp + r * din;
    for (std::size_t i = 0; i < din; ++i) {
      const double xv = xr[i];
      const double* wr = wp + i * dout;
      for (std::size_t j = 0; j < dout; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& W, const Tensor& gy, bool has_bias) {
  const std::size_t din = W.dim(0);
  const std::size_t dout = W.dim(1);
  if (gy.shape().back() != dout || gy.numel() / dout != x.numel() / din) {
    throw DimensionError("linear_backward: cotangent shape " + shape_str(gy.shape()) +
                         " inconsistent with input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / din;
  LinearGrads g{Tensor(x.shape()), Tensor(W.shape()), has_bias ? Tensor({dout}) : Tensor{}};
  const double* xp = x.data().data();
  const double* wp = W.data().data();
  const double* gp = gy.data().data();

  double* gxp = g.x.data().data();
#pragma omp parallel for schedule(static) if (rows * din * dout > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = gp + r * dout;
    for (std::size_t i = 0; i < din; ++i) {
      const double* wr = wp + i * dout;
      double s = 0.0;
      for (std::size_t j = 0; j < dout; ++j) s += wr[j] * gr[j];
      gxp[r * din + i] = s;
    }
  }

  double* gwp = g.W.data().data();
#pragma omp parallel for schedule(static) if (rows * din * dout > kParallelWork)
  for (std::size_t i = 0; i < din; ++i) {
    double* gwr = gwp + i * dout;
    for (std::size_t r = 0; r < rows; ++r) {
      const double xv = xp[r * din + i];
      const double* gr = gp + r * dout;
      for (std::size_t j = 0; j < dout; ++j) gwr[j] += xv * gr[j];
    }
  }

  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < dout; ++j) g.b[j] += gp[r * dout + j];
    }
  }
  return g;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, ConvMode mode, const Tensor& bias) {
  require_rank(x, 4, "conv2d input");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t plane = H * W;

  if (mode == ConvMode::pointwise) {
    require_rank(kernel, 2, "pointwise kernel");
    if (kernel.dim(1) != C) {
      throw DimensionError("pointwise conv: kernel expects " + std::to_string(kernel.dim(1)) +
                           " input channels, input has " + std::to_string(C));
    }
    const std::size_t Co = kernel.dim(0);
    if (!bias.empty() && bias.numel() != Co) throw DimensionError("pointwise conv: bias size mismatch");
    Tensor y({B, Co, H, W});
#pragma omp parallel for collapse(2) schedule(static) if (B * Co * C * plane > kParallelWork)
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < Co; ++o) {
        double* yp = y.data().data() + (b * Co + o) * plane;
        const double bv = bias.empty() ? 0.0 : bias[o];
        for (std::size_t p = 0; p < plane; ++p) yp[p] = bv;
        for (std::size_t i = 0; i < C; ++i) {
          const double kv = kernel[o * C + i];
          const double* xp = x.data().data() + (b * C + i) * plane;
          for (std::size_t p = 0; p < plane; ++p) yp[p] += kv * xp[p];
        }
      }
    }
    return y;
  }

  require_rank(kernel, 3, "depthwise kernel");
  if (kernel.dim(0) != C) {
    throw DimensionError("depthwise conv: kernel has " + std::to_string(kernel.dim(0)) +
                         " filters, input has " + std::to_string(C) + " channels");
  }
  const std::size_t k = kernel.dim(1);
  if (kernel.dim(2) != k || k % 2 == 0) {
    throw DimensionError("depthwise conv: kernel must be square with odd size, got " +
                         shape_str(kernel.shape()));
  }
  if (!bias.empty() && bias.numel() != C) throw DimensionError("depthwise conv: bias size mismatch");
  const long pad = static_cast<long>(k / 2);
  Tensor y({B, C, H, W});
#pragma omp parallel for collapse(2) schedule(static) if (B * C * plane * k * k > kParallelWork)
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* xp = x.data().data() + (b * C + c) * plane;
      const double* kp = kernel.data().data() + c * k * k;
      double* yp = y.data().data() + (b * C + c) * plane;
      const double bv = bias.empty() ? 0.0 : bias[c];
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          double s = bv;
          for (std::size_t u = 0; u < k; ++u) {
            const long yi = static_cast<long>(i + u) - pad;
            if (yi < 0 || yi >= static_cast<long>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const long xj = static_cast<long>(j + v) - pad;
              if (xj < 0 || xj >= static_cast<long>(W)) continue;
              s += kp[u * k + v] * xp[yi * W + xj];
            }
          }
          yp[i * W + j] = s;
        }
      }
    }
  }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, ConvMode mode, const Tensor& gy) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t plane = H * W;
  Conv2dGrads g{Tensor(x.shape()), Tensor(kernel.shape()), Tensor{}};

  if (mode == ConvMode::pointwise) {
    const std::size_t Co = kernel.dim(0);
    if (gy.shape() != Shape{B, Co, H, W}) throw DimensionError("pointwise conv backward: cotangent shape");
    g.bias = Tensor({Co});
#pragma omp parallel for collapse(2) schedule(static) if (B * Co * C * plane > kParallelWork)
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < C; ++i) {
        double* gxp = g.x.data().data() + (b * C + i) * plane;
        for (std::size_t o = 0; o < Co; ++o) {
          const double kv = kernel[o * C + i];
          const double* gp = gy.data().data() + (b * Co + o) * plane;
          for (std::size_t p = 0; p < plane; ++p) gxp[p] += kv * gp[p];
        }
      }
    }
#pragma omp parallel for schedule(static) if (B * Co * C * plane > kParallelWork)
    for (std::size_t o = 0; o < Co; ++o) {
      for (std::size_t b = 0; b < B; ++b) {
        const double* gp = gy.data().data() + (b * Co + o) * plane;
        for (std::size_t i = 0; i < C; ++i) {
          const double* xp = x.data().data() + (b * C + i) * plane;
          double s = 0.0;
          for (std::size_t p = 0; p < plane; ++p) s += gp[p] * xp[p];
          g.kernel[o * C + i] += s;
        }
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += gp[p];
        g.bias[o] += s;
      }
    }
    return g;
  }

  if (gy.shape() != x.shape()) throw DimensionError("depthwise conv backward: cotangent shape");
  const std::size_t k = kernel.dim(1);
  const long pad = static_cast<long>(k / 2);
  g.bias = Tensor({C});
#pragma omp parallel for schedule(static) if (B * C * plane * k * k > kParallelWork)
  for (std::size_t c = 0; c < C; ++c) {
    const double* kp = kernel.data().data() + c * k * k;
    double* gkp = g.kernel.data().data() + c * k * k;
    for (std::size_t b = 0; b < B; ++b) {
      const double* xp = x.data().data() + (b * C + c) * plane;
      const double* gp = gy.data().data() + (b * C + c) * plane;
      double* gxp = g.x.data().data() + (b * C + c) * plane;
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          const double gv = gp[i * W + j];
          g.bias[c] += gv;
          for (std::size_t u = 0; u < k; ++u) {
            const long yi = static_cast<long>(i + u) - pad;
            if (yi < 0 || yi >= static_cast<long>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const long xj = static_cast<long>(j + v) - pad;
              if (xj < 0 || xj >= static_cast<long>(W)) continue;
              gkp[u * k + v] += gv * xp[yi * W + xj];
              gxp[yi * W + xj] += gv * kp[u * k + v];
            }
          }
        }
      }
    }
  }
  return g;
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  const std::size_t n = x.numel();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < n; ++i) y[i] = softplus(x[i]);
      break;
    case Activation::exp:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
      break;
  }
  return y;
}

Tensor activation_backward(const Tensor& x, const Tensor& gy, Activation kind) {
  require_same_shape(x, gy, "activation_backward");
  Tensor g(x.shape());
  const std::size_t n = x.numel();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) g[i] = x[i] > 0.0 ? gy[i] : 0.0;
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < n; ++i) {
        const double s = sigmoid(x[i]);
        g[i] = gy[i] * s * (1.0 + x[i] * (1.0 - s));
      }
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < n; ++i) g[i] = gy[i] * sigmoid(x[i]);
      break;
    case Activation::exp:
      for (std::size_t i = 0; i < n; ++i) g[i] = gy[i] * std::exp(x[i]);
      break;
  }
  return g;
}

namespace {

// Visits the normalization groups of x. For layer norm a group is one row of
// the last axis; for batch norm it is every element of one channel.
struct NormLayout {
  std::size_t groups;     // number of independent statistics
  std::size_t count;      // elements per group
  std::size_t outer;      // batch-norm: B
  std::size_t inner;      // batch-norm: H*W (product of trailing axes)
  std::size_t channels;   // batch-norm: C
};

NormLayout norm_layout(const Tensor& x, NormKind kind) {
  if (x.rank() == 0) throw DimensionError("normalize: rank-0 input");
  if (kind == NormKind::layer) {
    const std::size_t d = x.shape().back();
    return {x.numel() / d, d, 0, 0, 0};
  }
  if (x.rank() < 2) throw DimensionError("batch norm needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1);
  const std::size_t inner = x.numel() / (B * C);
  return {C, B * inner, B, inner, C};
}

template <typename Fn>
void for_group(const NormLayout& L, NormKind kind, std::size_t g, Fn&& fn) {
  if (kind == NormKind::layer) {
    for (std::size_t i = 0; i < L.count; ++i) fn(g * L.count + i);
  } else {
    for (std::size_t b = 0; b < L.outer; ++b) {
      const std::size_t base = (b * L.channels + g) * L.inner;
      for (std::size_t p = 0; p < L.inner; ++p) fn(base + p);
    }
  }
}

}  // namespace

void batch_stats(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
  const NormLayout L = norm_layout(x, NormKind::batch);
  mean.assign(L.groups, 0.0);
  var.assign(L.groups, 0.0);
  for (std::size_t g = 0; g < L.groups; ++g) {
    double s = 0.0;
    for_group(L, NormKind::batch, g, [&](std::size_t i) { s += x[i]; });
    const double m = s / static_cast<double>(L.count);
    double v = 0.0;
    for_group(L, NormKind::batch, g, [&](std::size_t i) { v += (x[i] - m) * (x[i] - m); });
    mean[g] = m;
    var[g] = v / static_cast<double>(L.count);
  }
}

Tensor normalize(const Tensor& x, NormKind kind, const Tensor& gamma, const Tensor& beta, double eps,
                 NormCache* cache) {
  const NormLayout L = norm_layout(x, kind);
  const std::size_t param_size = kind == NormKind::layer ? L.count : L.groups;
  if (gamma.numel() != param_size || beta.numel() != param_size) {
    throw DimensionError("normalize: scale/shift size must be " + std::to_string(param_size));
  }
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> rstd(L.groups);
#pragma omp parallel for schedule(static) if (x.numel() > kParallelWork)
  for (std::size_t g = 0; g < L.groups; ++g) {
    double s = 0.0;
    for_group(L, kind, g, [&](std::size_t i) { s += x[i]; });
    const double m = s / static_cast<double>(L.count);
    double v = 0.0;
    for_group(L, kind, g, [&](std::size_t i) { v += (x[i] - m) * (x[i] - m); });
    v /= static_cast<double>(L.count);
    const double r = 1.0 / std::sqrt(v + eps);
    rstd[g] = r;
    for_group(L, kind, g, [&](std::size_t i) { xhat[i] = (x[i] - m) * r; });
  }
  if (kind == NormKind::layer) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const std::size_t j = i % L.count;
      y[i] = xhat[i] * gamma[j] + beta[j];
    }
  } else {
    for (std::size_t g = 0; g < L.groups; ++g) {
      for_group(L, kind, g, [&](std::size_t i) { y[i] = xhat[i] * gamma[g] + beta[g]; });
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

NormGrads normalize_backward(const NormCache& cache, NormKind kind, const Tensor& gamma,
                             const Tensor& gy) {
  const Tensor& xhat = cache.xhat;
  require_same_shape(xhat, gy, "normalize_backward");
  const NormLayout L = norm_layout(xhat, kind);
  NormGrads g{Tensor(xhat.shape()), Tensor(gamma.shape()), Tensor(gamma.shape())};
  const double inv_n = 1.0 / static_cast<double>(L.count);

  if (kind == NormKind::layer) {
    for (std::size_t grp = 0; grp < L.groups; ++grp) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t j = 0; j < L.count; ++j) {
        const std::size_t i = grp * L.count + j;
        const double gh = gy[i] * gamma[j];
        sum_g += gh;
        sum_gx += gh * xhat[i];
        g.gamma[j] += gy[i] * xhat[i];
        g.beta[j] += gy[i];
      }
      const double r = cache.rstd[grp];
      for (std::size_t j = 0; j < L.count; ++j) {
        const std::size_t i = grp * L.count + j;
        const double gh = gy[i] * gamma[j];
        g.x[i] = r * (gh - inv_n * sum_g - xhat[i] * inv_n * sum_gx);
      }
    }
    return g;
  }

#pragma omp parallel for schedule(static) if (xhat.numel() > kParallelWork)
  for (std::size_t grp = 0; grp < L.groups; ++grp) {
    double sum_g = 0.0, sum_gx = 0.0;
    for_group(L, kind, grp, [&](std::size_t i) {
      sum_g += gy[i];
      sum_gx += gy[i] * xhat[i];
    });
    g.gamma[grp] = sum_gx;
    g.beta[grp] = sum_g;
    const double scale = gamma[grp] * cache.rstd[grp];
    for_group(L, kind, grp, [&](std::size_t i) {
      g.x[i] = scale * (gy[i] - inv_n * sum_g - xhat[i] * inv_n * sum_gx);
    });
  }
  return g;
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            const Tensor& running_mean, const Tensor& running_var, double eps) {
  const NormLayout L = norm_layout(x, NormKind::batch);
  if (running_mean.numel() != L.groups || running_var.numel() != L.groups ||
      gamma.numel() != L.groups || beta.numel() != L.groups) {
    throw DimensionError("batch_norm_inference: statistics size must be " + std::to_string(L.groups));
  }
  Tensor y(x.shape());
  for (std::size_t g = 0; g < L.groups; ++g) {
    const double scale = gamma[g] / std::sqrt(running_var[g] + eps);
    const double shift = beta[g] - running_mean[g] * scale;
    for_group(L, NormKind::batch, g, [&](std::size_t i) { y[i] = x[i] * scale + shift; });
  }
  return y;
}

Tensor nchw_to_tokens(const Tensor& x) {
  require_rank(x, 4, "nchw_to_tokens");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor t({B, P, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) t[(b * P + p) * C + c] = x[(b * C + c) * P + p];
  return t;
}

Tensor tokens_to_nchw(const Tensor& t, std::size_t H, std::size_t W) {
  require_rank(t, 3, "tokens_to_nchw");
  const std::size_t B = t.dim(0), P = t.dim(1), C = t.dim(2);
  if (P != H * W) {
    throw DimensionError("tokens_to_nchw: " + std::to_string(P) + " tokens cannot fill " +
                         std::to_string(H) + "x" + std::to_string(W));
  }
  Tensor x({B, C, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) x[(b * C + c) * P + p] = t[(b * P + p) * C + c];
  return x;
}

Tensor softmax(const Tensor& logits) {
  const std::size_t K = logits.shape().back();
  const std::size_t rows = logits.numel() / K;
  Tensor p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data().data() + r * K;
    const double m = *std::max_element(z, z + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    for (std::size_t k = 0; k < K; ++k) p[r * K + k] = std::exp(z[k] - m) / s;
  }
  return p;
}

CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N) throw DimensionError("cross_entropy: label count != batch size");
  CrossEntropy ce{0.0, softmax(logits)};
  for (std::size_t r = 0; r < N; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw DimensionError("cross_entropy: label out of range");
    const double* z = logits.data().data() + r * K;
    const double m = *std::max_element(z, z + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    ce.loss += std::log(s) + m - z[y];
    ce.dlogits[r * K + static_cast<std::size_t>(y)] -= 1.0;
  }
  ce.loss /= static_cast<double>(N);
  ce.dlogits *= 1.0 / static_cast<double>(N);
  return ce;
}

}  // namespace gleason
