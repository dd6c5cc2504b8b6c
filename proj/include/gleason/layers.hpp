#pragma once

// Stateful wrappers around the kernels in ops.hpp. A layer caches what its
// backward pass needs during forward(), and backward() accumulates parameter
// gradients and returns the input cotangent.

#include <random>
#include <string>
#include <vector>

#include "gleason/ops.hpp"
#include "gleason/ss2d.hpp"
#include "gleason/tensor.hpp"

namespace gleason {

// Non-owning handle to one trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

// Non-trainable state that still belongs in a checkpoint (BN running stats).
struct BufferRef {
  std::string name;
  Tensor* value;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t din, std::size_t dout, std::mt19937_64& rng, bool zero_init = false);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Tensor W, b, gW, gb;

 private:
  Tensor x_;
};

class PointwiseConv {
 public:
  PointwiseConv() = default;
  PointwiseConv(std::size_t cin, std::size_t cout, std::mt19937_64& rng, bool bias = true);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Tensor K, b, gK, gb;  // b empty when built without bias

 private:
  Tensor x_;
};

class DepthwiseConv {
 public:
  DepthwiseConv() = default;
  DepthwiseConv(std::size_t channels, std::size_t kernel, std::mt19937_64& rng, bool bias = true);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Tensor K, b, gK, gb;

 private:
  Tensor x_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::size_t channels, double eps, double momentum);

  // training: batch statistics, running stats updated with `momentum`.
  // inference: running statistics.
  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);
  void buffers(const std::string& prefix, std::vector<BufferRef>& out);

  Tensor gamma, beta, ggamma, gbeta;
  Tensor running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

 private:
  NormCache cache_;
  bool cached_training_ = true;
};

// Normalizes over the last axis.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t dim, double eps);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Tensor gamma, beta, ggamma, gbeta;
  double eps = 1e-5;

 private:
  NormCache cache_;
};

class ActivationLayer {
 public:
  explicit ActivationLayer(Activation kind = Activation::relu) : kind_(kind) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Activation kind_;
  Tensor x_;
};

class SS2DLayer {
 public:
  SS2DLayer() = default;
  SS2DLayer(std::size_t channels, std::size_t state_size, std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);
  // Keeps A strictly negative after an optimizer step.
  void clamp_state_matrix(double max_value);

  ss2d::Params p;
  std::array<s6::S6Params, 4> grads;
  s6::ScanMode mode = s6::ScanMode::parallel;

 private:
  ss2d::Cache cache_;
};

}  // namespace gleason
