#include "gleason/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gleason/errors.hpp"

namespace gleason {

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void accumulate(Tensor& acc, const Tensor& g) {
  if (acc.shape() != g.shape()) acc = Tensor(g.shape());
  acc += g;
}

}  // namespace

Linear::Linear(std::size_t din, std::size_t dout, std::mt19937_64& rng, bool zero_init)
    : W(zero_init ? Tensor({din, dout}) : Tensor::uniform({din, dout}, rng, -fan_in_bound(din), fan_in_bound(din))),
      b({dout}),
      gW({din, dout}),
      gb({dout}) {}

Tensor Linear::forward(const Tensor& x) {
  x_ = x;
  return linear(x, W, b);
}

Tensor Linear::backward(const Tensor& gy) {
  LinearGrads g = linear_backward(x_, W, gy);
  accumulate(gW, g.W);
  accumulate(gb, g.b);
  return std::move(g.x);
}

void Linear::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".W", &W, &gW});
  out.push_back({prefix + ".b", &b, &gb});
}

PointwiseConv::PointwiseConv(std::size_t cin, std::size_t cout, std::mt19937_64& rng, bool bias)
    : K(Tensor::uniform({cout, cin}, rng, -fan_in_bound(cin), fan_in_bound(cin))), gK({cout, cin}) {
  if (bias) {
    b = Tensor({cout});
    gb = Tensor({cout});
  }
}

Tensor PointwiseConv::forward(const Tensor& x) {
  x_ = x;
  return conv2d(x, K, ConvMode::pointwise, b);
}

Tensor PointwiseConv::backward(const Tensor& gy) {
  Conv2dGrads g = conv2d_backward(x_, K, ConvMode::pointwise, gy);
  accumulate(gK, g.kernel);
  if (!b.empty()) accumulate(gb, g.bias);
  return std::move(g.x);
}

void PointwiseConv::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".K", &K, &gK});
  if (!b.empty()) out.push_back({prefix + ".b", &b, &gb});
}

DepthwiseConv::DepthwiseConv(std::size_t channels, std::size_t kernel, std::mt19937_64& rng, bool bias)
    : K(Tensor::uniform({channels, kernel, kernel}, rng, -fan_in_bound(kernel * kernel),
                        fan_in_bound(kernel * kernel))),
      gK({channels, kernel, kernel}) {
  if (bias) {
    b = Tensor({channels});
    gb = Tensor({channels});
  }
}

Tensor DepthwiseConv::forward(const Tensor& x) {
  x_ = x;
  return conv2d(x, K, ConvMode::depthwise, b);
}

Tensor DepthwiseConv::backward(const Tensor& gy) {
  Conv2dGrads g = conv2d_backward(x_, K, ConvMode::depthwise, gy);
  accumulate(gK, g.kernel);
  if (!b.empty()) accumulate(gb, g.bias);
  return std::move(g.x);
}

void DepthwiseConv::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".K", &K, &gK});
  if (!b.empty()) out.push_back({prefix + ".b", &b, &gb});
}

BatchNorm2d::BatchNorm2d(std::size_t channels, double eps_, double momentum_)
    : gamma({channels}, 1.0),
      beta({channels}),
      ggamma({channels}),
      gbeta({channels}),
      running_mean({channels}),
      running_var({channels}, 1.0),
      eps(eps_),
      momentum(momentum_) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  cached_training_ = training;
  if (!training) {
    return batch_norm_inference(x, gamma, beta, running_mean, running_var, eps);
  }
  std::vector<double> mean, var;
  batch_stats(x, mean, var);
  const double count = static_cast<double>(x.numel() / x.dim(1));
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
  }
  return normalize(x, NormKind::batch, gamma, beta, eps, &cache_);
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  if (!cached_training_) throw ConfigError("BatchNorm2d::backward after an inference-mode forward");
  NormGrads g = normalize_backward(cache_, NormKind::batch, gamma, gy);
  accumulate(ggamma, g.gamma);
  accumulate(gbeta, g.beta);
  return std::move(g.x);
}

void BatchNorm2d::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggamma});
  out.push_back({prefix + ".beta", &beta, &gbeta});
}

void BatchNorm2d::buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

LayerNorm::LayerNorm(std::size_t dim, double eps_)
    : gamma({dim}, 1.0), beta({dim}), ggamma({dim}), gbeta({dim}), eps(eps_) {}

Tensor LayerNorm::forward(const Tensor& x) { return normalize(x, NormKind::layer, gamma, beta, eps, &cache_); }

Tensor LayerNorm::backward(const Tensor& gy) {
  NormGrads g = normalize_backward(cache_, NormKind::layer, gamma, gy);
  accumulate(ggamma, g.gamma);
  accumulate(gbeta, g.beta);
  return std::move(g.x);
}

void LayerNorm::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggamma});
  out.push_back({prefix + ".beta", &beta, &gbeta});
}

Tensor ActivationLayer::forward(const Tensor& x) {
  x_ = x;
  return activation(x, kind_);
}

Tensor ActivationLayer::backward(const Tensor& gy) { return activation_backward(x_, gy, kind_); }

SS2DLayer::SS2DLayer(std::size_t channels, std::size_t state_size, std::mt19937_64& rng)
    : p(ss2d::Params::init(channels, state_size, rng)) {
  for (auto& g : grads) g = s6::S6Params::zeros(channels, state_size);
}

Tensor SS2DLayer::forward(const Tensor& x) { return ss2d::forward(x, p, mode, &cache_); }

Tensor SS2DLayer::backward(const Tensor& gy) {
  ss2d::Grads g = ss2d::backward(p, cache_, gy);
  for (std::size_t dir = 0; dir < 4; ++dir) {
    auto dst = grads[dir].tensors();
    auto src = g.dirs[dir].tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
  }
  return std::move(g.x);
}

void SS2DLayer::params(const std::string& prefix, std::vector<ParamRef>& out) {
  const auto& names = s6::S6Params::tensor_names();
  for (auto dir : ss2d::kDirections) {
    const auto i = static_cast<std::size_t>(dir);
    auto values = p.dirs[i].tensors();
    auto gs = grads[i].tensors();
    for (std::size_t k = 0; k < names.size(); ++k) {
      out.push_back({prefix + "." + std::string(ss2d::direction_name(dir)) + "." + names[k], values[k], gs[k]});
    }
  }
}

void SS2DLayer::clamp_state_matrix(double max_value) {
  for (auto& d : p.dirs) {
    for (auto& a : d.A.data()) a = std::min(a, max_value);
  }
}

}  // namespace gleason
