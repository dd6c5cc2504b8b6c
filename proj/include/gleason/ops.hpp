#pragma once

// Dense kernels with paired forward / vector-Jacobian implementations.
// Feature maps are channels-first (B, C, H, W), row-major.

#include <string_view>
#include <vector>

#include "gleason/tensor.hpp"

namespace gleason {

// y[..., j] = sum_i x[..., i] * W[i, j] + b[j]. An empty `b` means no bias.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

struct LinearGrads {
  Tensor x, W, b;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& W, const Tensor& gy, bool has_bias = true);

enum class ConvMode { depthwise, pointwise };

// depthwise kernel: [C, k, k] with k odd, zero "same" padding.
// pointwise kernel: [C_out, C_in] (a 1x1 convolution).
Tensor conv2d(const Tensor& x, const Tensor& kernel, ConvMode mode, const Tensor& bias = {});

struct Conv2dGrads {
  Tensor x, kernel, bias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, ConvMode mode, const Tensor& gy);

enum class Activation { relu, silu, softplus, exp };

Tensor activation(const Tensor& x, Activation kind);
// Subgradient 0 is used for relu at exactly 0.
Tensor activation_backward(const Tensor& x, const Tensor& gy, Activation kind);

double sigmoid(double v);
double softplus(double v);

enum class NormKind { batch, layer };

// Saved statistics for the backward pass: the normalized input and the
// reciprocal standard deviation per normalized group.
struct NormCache {
  Tensor xhat;
  std::vector<double> rstd;
};

// layer: normalizes over the last axis; gamma/beta have the last-axis size.
// batch: normalizes over every axis except axis 1 (batch statistics, population
//        variance); gamma/beta have size dim(1).
Tensor normalize(const Tensor& x, NormKind kind, const Tensor& gamma, const Tensor& beta,
                 double eps, NormCache* cache = nullptr);

struct NormGrads {
  Tensor x, gamma, beta;
};
NormGrads normalize_backward(const NormCache& cache, NormKind kind, const Tensor& gamma,
                             const Tensor& gy);

// Per-channel batch statistics of x (axis 1). Variance is the population variance.
void batch_stats(const Tensor& x, std::vector<double>& mean, std::vector<double>& var);

// Inference-time batch norm with fixed statistics.
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            const Tensor& running_mean, const Tensor& running_var, double eps);

// [B, C, H, W] <-> [B, H*W, C] (row-major token order).
Tensor nchw_to_tokens(const Tensor& x);
Tensor tokens_to_nchw(const Tensor& t, std::size_t H, std::size_t W);

// Row-wise softmax over the last axis.
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
  double loss;    // mean over rows
  Tensor dlogits; // gradient of the mean loss
};
CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace gleason
