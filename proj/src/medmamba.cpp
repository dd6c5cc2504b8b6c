#include "gleason/medmamba.hpp"

#include <algorithm>

#include "gleason/errors.hpp"

namespace gleason {

std::string_view label_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::benign: return "benign";
    case ClassLabel::g3: return "g3";
    case ClassLabel::g4: return "g4";
    case ClassLabel::g5: return "g5";
  }
  return "?";
}

std::optional<ClassLabel> parse_label(std::string_view token) {
  if (token == "benign") return ClassLabel::benign;
  if (token == "g3") return ClassLabel::g3;
  if (token == "g4") return ClassLabel::g4;
  if (token == "g5") return ClassLabel::g5;
  return std::nullopt;
}

// ---- channel plumbing ------------------------------------------------------

namespace {

void require_nchw(const Tensor& x, const char* what) {
  if (x.rank() != 4) throw DimensionError(std::string(what) + ": expected [B, C, H, W], got " + shape_str(x.shape()));
}

// Copies channels [c0, c0 + count) of x into a new tensor.
Tensor channel_slice(const Tensor& x, std::size_t c0, std::size_t count) {
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor out({B, count, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < B; ++b) {
    const auto src = x.data().begin() + static_cast<std::ptrdiff_t>((b * C + c0) * P);
    std::copy(src, src + static_cast<std::ptrdiff_t>(count * P),
              out.data().begin() + static_cast<std::ptrdiff_t>(b * count * P));
  }
  return out;
}

}  // namespace

std::pair<Tensor, Tensor> channel_split(const Tensor& x) {
  require_nchw(x, "channel_split");
  const std::size_t C = x.dim(1);
  if (C % 2 != 0) throw ConfigError("channel_split: channel count " + std::to_string(C) + " is odd");
  return {channel_slice(x, 0, C / 2), channel_slice(x, C / 2, C / 2)};
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
  require_nchw(a, "channel_concat");
  require_nchw(b, "channel_concat");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("channel_concat: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), P = a.dim(2) * a.dim(3);
  Tensor out({B, Ca + Cb, a.dim(2), a.dim(3)});
  auto dst = out.data().begin();
  for (std::size_t n = 0; n < B; ++n) {
    const auto sa = a.data().begin() + static_cast<std::ptrdiff_t>(n * Ca * P);
    dst = std::copy(sa, sa + static_cast<std::ptrdiff_t>(Ca * P), dst);
    const auto sb = b.data().begin() + static_cast<std::ptrdiff_t>(n * Cb * P);
    dst = std::copy(sb, sb + static_cast<std::ptrdiff_t>(Cb * P), dst);
  }
  return out;
}

Tensor channel_shuffle(const Tensor& x, std::size_t groups) {
  require_nchw(x, "channel_shuffle");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  if (groups == 0 || C % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(C) + " channels not divisible by " +
                      std::to_string(groups) + " groups");
  }
  const std::size_t per = C / groups;
  Tensor out(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < C; ++o) {
      const std::size_t src = (o % groups) * per + o / groups;
      const auto s = x.data().begin() + static_cast<std::ptrdiff_t>((b * C + src) * P);
      std::copy(s, s + static_cast<std::ptrdiff_t>(P), out.data().begin() + static_cast<std::ptrdiff_t>((b * C + o) * P));
    }
  }
  return out;
}

// ---- configuration ---------------------------------------------------------

void SSConvSSMConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("block channels must be even, got " + std::to_string(channels));
  if (shuffle_groups == 0 || channels % shuffle_groups != 0) {
    throw ConfigError("block channels " + std::to_string(channels) + " not divisible by shuffle groups " +
                      std::to_string(shuffle_groups));
  }
  if (conv_kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
  if (state_size == 0) throw ConfigError("state size must be positive");
}

void ModelConfig::validate() const {
  if (patch_size == 0 || input_size % patch_size != 0) {
    throw ConfigError("input size " + std::to_string(input_size) + " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size()) {
    throw ConfigError("stage_widths and blocks_per_stage must be non-empty and of equal length");
  }
  const std::size_t grid = input_size / patch_size;
  const std::size_t down = std::size_t{1} << (stage_widths.size() - 1);
  if (grid % down != 0) {
    throw ConfigError("token grid " + std::to_string(grid) + " not divisible by 2^(stages-1) = " +
                      std::to_string(down));
  }
  for (std::size_t s = 0; s < stage_widths.size(); ++s) {
    block_config(s).validate();
    if (s > 0 && stage_widths[s] != 2 * stage_widths[s - 1]) {
      throw ConfigError("patch merging doubles channels: stage " + std::to_string(s) + " width must be " +
                        std::to_string(2 * stage_widths[s - 1]));
    }
  }
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
}

SSConvSSMConfig ModelConfig::block_config(std::size_t stage) const {
  return {stage_widths.at(stage), state_size, conv_kernel, shuffle_groups, norm_eps, bn_momentum};
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"input_size", c.input_size},     {"in_channels", c.in_channels},
       {"patch_size", c.patch_size},     {"stage_widths", c.stage_widths},
       {"blocks_per_stage", c.blocks_per_stage}, {"state_size", c.state_size},
       {"conv_kernel", c.conv_kernel},   {"shuffle_groups", c.shuffle_groups},
       {"num_classes", c.num_classes},   {"norm_eps", c.norm_eps},
       {"bn_momentum", c.bn_momentum}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.stage_widths = j.value("stage_widths", d.stage_widths);
  c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  c.state_size = j.value("state_size", d.state_size);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
  c.shuffle_groups = j.value("shuffle_groups", d.shuffle_groups);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.norm_eps = j.value("norm_eps", d.norm_eps);
  c.bn_momentum = j.value("bn_momentum", d.bn_momentum);
}

std::vector<ShapeStep> shape_trace(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ShapeStep> trace;
  trace.push_back({"input", {1, cfg.in_channels, cfg.input_size, cfg.input_size}});
  std::size_t side = cfg.input_size / cfg.patch_size;
  trace.push_back({"patch_embed", {1, cfg.stage_widths[0], side, side}});
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    for (std::size_t k = 0; k < cfg.blocks_per_stage[s]; ++k) {
      trace.push_back({"stage" + std::to_string(s) + ".block" + std::to_string(k),
                       {1, cfg.stage_widths[s], side, side}});
    }
    if (s + 1 < cfg.stage_widths.size()) {
      side /= 2;
      trace.push_back({"merge" + std::to_string(s), {1, 2 * cfg.stage_widths[s], side, side}});
    }
  }
  trace.push_back({"head", {1, cfg.num_classes}});
  return trace;
}

// ---- SS-Conv-SSM block -----------------------------------------------------

SSConvSSMBlock::SSConvSSMBlock(const SSConvSSMConfig& c, std::mt19937_64& rng) : cfg(c) {
  cfg.validate();
  const std::size_t half = cfg.channels / 2;
  pw_in = PointwiseConv(half, half, rng, /*bias=*/false);  // BN follows
  bn1 = BatchNorm2d(half, cfg.norm_eps, cfg.bn_momentum);
  dw = DepthwiseConv(half, cfg.conv_kernel, rng, /*bias=*/false);
  bn2 = BatchNorm2d(half, cfg.norm_eps, cfg.bn_momentum);
  pw_out = PointwiseConv(half, half, rng);
  ln_in = LayerNorm(half, cfg.norm_eps);
  proj_in = Linear(half, half, rng);
  ss2d = SS2DLayer(half, cfg.state_size, rng);
  ln_out = LayerNorm(half, cfg.norm_eps);
  proj_out = Linear(half, half, rng);
}

Tensor SSConvSSMBlock::forward(const Tensor& x, bool training) {
  require_nchw(x, "ss_conv_ssm");
  if (x.dim(1) != cfg.channels) {
    throw DimensionError("ss_conv_ssm: expected " + std::to_string(cfg.channels) + " channels, got " +
                         std::to_string(x.dim(1)));
  }
  H_ = x.dim(2);
  W_ = x.dim(3);
  auto [x1, x2] = channel_split(x);

  Tensor a = pw_in.forward(x1);
  a = relu1.forward(bn1.forward(a, training));
  a = dw.forward(a);
  a = relu2.forward(bn2.forward(a, training));
  a = pw_out.forward(a);

  Tensor t = silu.forward(proj_in.forward(ln_in.forward(nchw_to_tokens(x2))));
  Tensor f = ss2d.forward(tokens_to_nchw(t, H_, W_));
  t = proj_out.forward(ln_out.forward(nchw_to_tokens(f)));

  Tensor y = channel_shuffle(channel_concat(a, tokens_to_nchw(t, H_, W_)), cfg.shuffle_groups);
  y += x;
  return y;
}

Tensor SSConvSSMBlock::backward(const Tensor& gy) {
  const Tensor g_cat = channel_shuffle(gy, cfg.channels / cfg.shuffle_groups);
  auto [ga, gb] = channel_split(g_cat);

  ga = pw_out.backward(ga);
  ga = bn2.backward(relu2.backward(ga));
  ga = dw.backward(ga);
  ga = bn1.backward(relu1.backward(ga));
  ga = pw_in.backward(ga);

  Tensor gt = ln_out.backward(proj_out.backward(nchw_to_tokens(gb)));
  Tensor gf = ss2d.backward(tokens_to_nchw(gt, H_, W_));
  gt = ln_in.backward(proj_in.backward(silu.backward(nchw_to_tokens(gf))));

  Tensor gx = channel_concat(ga, tokens_to_nchw(gt, H_, W_));
  gx += gy;
  return gx;
}

void SSConvSSMBlock::params(const std::string& prefix, std::vector<ParamRef>& out) {
  pw_in.params(prefix + ".pw_in", out);
  bn1.params(prefix + ".bn1", out);
  dw.params(prefix + ".dw", out);
  bn2.params(prefix + ".bn2", out);
  pw_out.params(prefix + ".pw_out", out);
  ln_in.params(prefix + ".ln_in", out);
  proj_in.params(prefix + ".proj_in", out);
  ss2d.params(prefix + ".ss2d", out);
  ln_out.params(prefix + ".ln_out", out);
  proj_out.params(prefix + ".proj_out", out);
}

void SSConvSSMBlock::buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  bn1.buffers(prefix + ".bn1", out);
  bn2.buffers(prefix + ".bn2", out);
}

// ---- patch embedding / merging / head --------------------------------------

namespace {

// [B, C, H, W] -> [B, (H/P)*(W/P), C*P*P], features ordered (c, dy, dx).
Tensor extract_patches(const Tensor& image, std::size_t P) {
  require_nchw(image, "patch_embed");
  const std::size_t B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  if (P == 0 || H % P != 0 || W % P != 0) {
    throw ConfigError("patch_embed: image " + std::to_string(H) + "x" + std::to_string(W) +
                      " not divisible by patch size " + std::to_string(P));
  }
  const std::size_t Hp = H / P, Wp = W / P, F = C * P * P;
  Tensor out({B, Hp * Wp, F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t token = (y / P) * Wp + x / P;
          const std::size_t f = (c * P + y % P) * P + x % P;
          out[(b * Hp * Wp + token) * F + f] = image[((b * C + c) * H + y) * W + x];
        }
  return out;
}

Tensor fold_patches(const Tensor& patches, const Shape& image_shape, std::size_t P) {
  const std::size_t B = image_shape[0], C = image_shape[1], H = image_shape[2], W = image_shape[3];
  const std::size_t Hp = H / P, Wp = W / P, F = C * P * P;
  Tensor img(image_shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t token = (y / P) * Wp + x / P;
          const std::size_t f = (c * P + y % P) * P + x % P;
          img[((b * C + c) * H + y) * W + x] = patches[(b * Hp * Wp + token) * F + f];
        }
  return img;
}

constexpr std::size_t kMergeOffsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};  // (dy, dx)

// [B, C, H, W] -> [B, (H/2)*(W/2), 4C]
Tensor gather_neighbourhoods(const Tensor& x) {
  require_nchw(x, "patch_merge");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ConfigError("patch_merge: spatial size " + std::to_string(H) + "x" + std::to_string(W) + " must be even");
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out({B, Ho * Wo, 4 * C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j)
        for (std::size_t q = 0; q < 4; ++q)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t y = 2 * i + kMergeOffsets[q][0], xx = 2 * j + kMergeOffsets[q][1];
            out[((b * Ho * Wo) + i * Wo + j) * 4 * C + q * C + c] = x[((b * C + c) * H + y) * W + xx];
          }
  return out;
}

Tensor scatter_neighbourhoods(const Tensor& g, const Shape& shape) {
  const std::size_t B = shape[0], C = shape[1], H = shape[2], W = shape[3];
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out(shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j)
        for (std::size_t q = 0; q < 4; ++q)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t y = 2 * i + kMergeOffsets[q][0], xx = 2 * j + kMergeOffsets[q][1];
            out[((b * C + c) * H + y) * W + xx] = g[((b * Ho * Wo) + i * Wo + j) * 4 * C + q * C + c];
          }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "classify");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor pooled({B, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < P; ++p) s += x[(b * C + c) * P + p];
      pooled[b * C + c] = s / static_cast<double>(P);
    }
  return pooled;
}

}  // namespace

Tensor patch_embed(const Tensor& image, std::size_t patch, const Tensor& W, const Tensor& b) {
  const std::size_t side_h = image.rank() == 4 ? image.dim(2) / std::max<std::size_t>(patch, 1) : 0;
  const std::size_t side_w = image.rank() == 4 ? image.dim(3) / std::max<std::size_t>(patch, 1) : 0;
  return tokens_to_nchw(linear(extract_patches(image, patch), W, b), side_h, side_w);
}

Tensor patch_merge(const Tensor& x, const Tensor& W, const Tensor& b) {
  Tensor tokens = gather_neighbourhoods(x);
  return tokens_to_nchw(linear(tokens, W, b), x.dim(2) / 2, x.dim(3) / 2);
}

Tensor classify(const Tensor& features, const Tensor& W, const Tensor& b) {
  return linear(global_avg_pool(features), W, b);
}

PatchEmbed::PatchEmbed(std::size_t in_channels, std::size_t patch_, std::size_t out_channels, std::mt19937_64& rng)
    : patch(patch_), proj(in_channels * patch_ * patch_, out_channels, rng) {}

Tensor PatchEmbed::forward(const Tensor& image) {
  in_shape_ = image.shape();
  Tensor tokens = proj.forward(extract_patches(image, patch));
  return tokens_to_nchw(tokens, image.dim(2) / patch, image.dim(3) / patch);
}

Tensor PatchEmbed::backward(const Tensor& gy) {
  return fold_patches(proj.backward(nchw_to_tokens(gy)), in_shape_, patch);
}

void PatchEmbed::params(const std::string& prefix, std::vector<ParamRef>& out) { proj.params(prefix + ".proj", out); }

PatchMerge::PatchMerge(std::size_t channels, std::mt19937_64& rng) : proj(4 * channels, 2 * channels, rng) {}

Tensor PatchMerge::forward(const Tensor& x) {
  in_shape_ = x.shape();
  Tensor tokens = proj.forward(gather_neighbourhoods(x));
  return tokens_to_nchw(tokens, x.dim(2) / 2, x.dim(3) / 2);
}

Tensor PatchMerge::backward(const Tensor& gy) {
  return scatter_neighbourhoods(proj.backward(nchw_to_tokens(gy)), in_shape_);
}

void PatchMerge::params(const std::string& prefix, std::vector<ParamRef>& out) { proj.params(prefix + ".proj", out); }

ClassifierHead::ClassifierHead(std::size_t channels, std::size_t classes, std::mt19937_64& rng)
    : fc(channels, classes, rng, /*zero_init=*/true) {}

Tensor ClassifierHead::forward(const Tensor& features) {
  in_shape_ = features.shape();
  return fc.forward(global_avg_pool(features));
}

Tensor ClassifierHead::backward(const Tensor& gy) {
  const Tensor gp = fc.backward(gy);
  const std::size_t B = in_shape_[0], C = in_shape_[1], P = in_shape_[2] * in_shape_[3];
  Tensor gx(in_shape_);
  const double inv = 1.0 / static_cast<double>(P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) gx[(b * C + c) * P + p] = gp[b * C + c] * inv;
  return gx;
}

void ClassifierHead::params(const std::string& prefix, std::vector<ParamRef>& out) { fc.params(prefix + ".fc", out); }

// ---- full model ------------------------------------------------------------

MedMamba::MedMamba(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  embed = PatchEmbed(cfg_.in_channels, cfg_.patch_size, cfg_.stage_widths[0], rng);
  for (std::size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
    std::vector<SSConvSSMBlock> blocks;
    for (std::size_t k = 0; k < cfg_.blocks_per_stage[s]; ++k) blocks.emplace_back(cfg_.block_config(s), rng);
    stages.push_back(std::move(blocks));
    if (s + 1 < cfg_.stage_widths.size()) merges.emplace_back(cfg_.stage_widths[s], rng);
  }
  head = ClassifierHead(cfg_.stage_widths.back(), cfg_.num_classes, rng);
}

Tensor MedMamba::forward(const Tensor& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels || images.dim(2) != cfg_.input_size ||
      images.dim(3) != cfg_.input_size) {
    throw DimensionError("model expects [B, " + std::to_string(cfg_.in_channels) + ", " +
                         std::to_string(cfg_.input_size) + ", " + std::to_string(cfg_.input_size) + "], got " +
                         shape_str(images.shape()));
  }
  Tensor x = embed.forward(images);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (auto& blk : stages[s]) x = blk.forward(x, training);
    if (s < merges.size()) x = merges[s].forward(x);
  }
  return head.forward(x);
}

Tensor MedMamba::backward(const Tensor& dlogits) {
  Tensor g = head.backward(dlogits);
  for (std::size_t s = stages.size(); s-- > 0;) {
    if (s < merges.size()) g = merges[s].backward(g);
    for (std::size_t k = stages[s].size(); k-- > 0;) g = stages[s][k].backward(g);
  }
  return embed.backward(g);
}

Tensor MedMamba::predict(const Tensor& images, std::size_t batch) {
  const std::size_t N = images.dim(0);
  const std::size_t per = images.numel() / N;
  Tensor logits({N, cfg_.num_classes});
  for (std::size_t start = 0; start < N; start += batch) {
    const std::size_t count = std::min(batch, N - start);
    Shape shape = images.shape();
    shape[0] = count;
    const auto first = images.data().begin() + static_cast<std::ptrdiff_t>(start * per);
    Tensor chunk(shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * per)));
    const Tensor out = forward(chunk, /*training=*/false);
    std::copy(out.data().begin(), out.data().end(),
              logits.data().begin() + static_cast<std::ptrdiff_t>(start * cfg_.num_classes));
  }
  return logits;
}

std::vector<ParamRef> MedMamba::params() {
  std::vector<ParamRef> out;
  embed.params("embed", out);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t k = 0; k < stages[s].size(); ++k) {
      stages[s][k].params("stage" + std::to_string(s) + ".block" + std::to_string(k), out);
    }
    if (s < merges.size()) merges[s].params("merge" + std::to_string(s), out);
  }
  head.params("head", out);
  return out;
}

std::vector<BufferRef> MedMamba::buffers() {
  std::vector<BufferRef> out;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t k = 0; k < stages[s].size(); ++k) {
      stages[s][k].buffers("stage" + std::to_string(s) + ".block" + std::to_string(k), out);
    }
  }
  return out;
}

void MedMamba::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

void MedMamba::clamp_state_matrices(double max_value) {
  for (auto& stage : stages)
    for (auto& blk : stage) blk.ss2d.clamp_state_matrix(max_value);
}

Checkpoint MedMamba::to_checkpoint() {
  Checkpoint ckpt;
  for (const auto& p : params()) ckpt.tensors.push_back({p.name, *p.value});
  for (const auto& b : buffers()) ckpt.tensors.push_back({b.name, *b.value});
  ckpt.meta = {{"format", "medmamba-checkpoint-v1"}, {"model", cfg_}};
  return ckpt;
}

MedMamba MedMamba::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw InputError("checkpoint carries no model config");
  MedMamba model(ckpt.meta.at("model").get<ModelConfig>(), 0);
  auto assign = [&](const std::string& name, Tensor* dst) {
    const Tensor& src = ckpt.get(name);
    if (src.shape() != dst->shape()) {
      throw InputError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                       shape_str(dst->shape()));
    }
    *dst = src;
  };
  for (auto& p : model.params()) assign(p.name, p.value);
  for (auto& b : model.buffers()) assign(b.name, b.value);
  return model;
}

}  // namespace gleason
