#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "gleason/layers.hpp"
#include "gleason/serialize.hpp"
#include "gleason/tensor.hpp"

namespace gleason {

// Reporting order is benign < g3 < g4 < g5.
enum class ClassLabel { benign = 0, g3 = 1, g4 = 2, g5 = 3 };
inline constexpr std::size_t kNumClasses = 4;

std::string_view label_name(ClassLabel label);
std::optional<ClassLabel> parse_label(std::string_view token);

// ---- channel plumbing ------------------------------------------------------

std::pair<Tensor, Tensor> channel_split(const Tensor& x);
Tensor channel_concat(const Tensor& a, const Tensor& b);
// Reshape channels to (groups, C/groups), transpose, flatten. The inverse of
// shuffle(g) is shuffle(C/g).
Tensor channel_shuffle(const Tensor& x, std::size_t groups);

// ---- configuration ---------------------------------------------------------

struct SSConvSSMConfig {
  std::size_t channels = 16;
  std::size_t state_size = 8;
  std::size_t conv_kernel = 3;
  std::size_t shuffle_groups = 2;
  double norm_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
};

struct ModelConfig {
  std::size_t input_size = 32;  // square H = W
  std::size_t in_channels = 3;
  std::size_t patch_size = 4;
  std::vector<std::size_t> stage_widths{16, 32};
  std::vector<std::size_t> blocks_per_stage{1, 1};
  std::size_t state_size = 8;
  std::size_t conv_kernel = 3;
  std::size_t shuffle_groups = 2;
  std::size_t num_classes = kNumClasses;
  double norm_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  SSConvSSMConfig block_config(std::size_t stage) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ShapeStep {
  std::string layer;
  Shape shape;
};

// Per-layer output shapes for a batch of one, computed from the config alone.
std::vector<ShapeStep> shape_trace(const ModelConfig& cfg);

// ---- layers ----------------------------------------------------------------

// x -> shuffle(concat(conv_branch(x1), ssm_branch(x2))) + x, where (x1, x2) = split(x)
//   conv branch: PWConv -> BN -> ReLU -> DWConv -> BN -> ReLU -> PWConv
//   ssm branch:  LN -> Linear -> SiLU -> SS2D -> LN -> Linear   (per pixel, channels last)
class SSConvSSMBlock {
 public:
  SSConvSSMBlock() = default;
  SSConvSSMBlock(const SSConvSSMConfig& cfg, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);
  void buffers(const std::string& prefix, std::vector<BufferRef>& out);

  SSConvSSMConfig cfg;
  PointwiseConv pw_in, pw_out;
  BatchNorm2d bn1, bn2;
  ActivationLayer relu1{Activation::relu}, relu2{Activation::relu};
  DepthwiseConv dw;
  LayerNorm ln_in, ln_out;
  Linear proj_in, proj_out;
  ActivationLayer silu{Activation::silu};
  SS2DLayer ss2d;

 private:
  std::size_t H_ = 0, W_ = 0;
};

// Non-overlapping P x P patches, each flattened (c, dy, dx) and projected to C0.
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(std::size_t in_channels, std::size_t patch, std::size_t out_channels, std::mt19937_64& rng);

  Tensor forward(const Tensor& image);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  std::size_t patch = 4;
  Linear proj;

 private:
  Shape in_shape_;
};

// Each 2x2 neighbourhood concatenated in the order (0,0),(1,0),(0,1),(1,1)
// to 4C channels, then projected to 2C.
class PatchMerge {
 public:
  PatchMerge() = default;
  PatchMerge(std::size_t channels, std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Linear proj;

 private:
  Shape in_shape_;
};

// Global average pool over H, W followed by a linear map to the class logits.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t channels, std::size_t classes, std::mt19937_64& rng);

  Tensor forward(const Tensor& features);
  Tensor backward(const Tensor& gy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Linear fc;  // zero-initialized

 private:
  Shape in_shape_;
};

Tensor patch_embed(const Tensor& image, std::size_t patch, const Tensor& W, const Tensor& b);
Tensor patch_merge(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor classify(const Tensor& features, const Tensor& W, const Tensor& b);

class MedMamba {
 public:
  MedMamba(const ModelConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& images, bool training);
  Tensor backward(const Tensor& dlogits);
  // Eval-mode logits, processed in chunks of `batch`.
  Tensor predict(const Tensor& images, std::size_t batch = 64);

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  void zero_grad();
  void clamp_state_matrices(double max_value);

  Checkpoint to_checkpoint();
  static MedMamba from_checkpoint(const Checkpoint& ckpt);

  const ModelConfig& config() const { return cfg_; }

  PatchEmbed embed;
  std::vector<std::vector<SSConvSSMBlock>> stages;
  std::vector<PatchMerge> merges;
  ClassifierHead head;

 private:
  ModelConfig cfg_;
};

}  // namespace gleason
