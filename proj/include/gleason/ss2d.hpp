#pragma once

// 2D selective scan: a [B, C, H, W] feature map is unfolded into four token
// sequences, each sequence runs through its own S6 layer, and the outputs are
// folded back to the grid and summed.
//
// Directions are row-major forward/reverse and column-major forward/reverse.

#include <array>
#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include "gleason/s6.hpp"
#include "gleason/tensor.hpp"

namespace gleason::ss2d {

enum class ScanDirection { row_forward = 0, row_reverse = 1, col_forward = 2, col_reverse = 3 };

inline constexpr std::array<ScanDirection, 4> kDirections = {
    ScanDirection::row_forward, ScanDirection::row_reverse, ScanDirection::col_forward,
    ScanDirection::col_reverse};

std::string_view direction_name(ScanDirection dir);

// order[k] = flat grid position (h * W + w) visited at sequence step k.
std::vector<std::size_t> traversal(ScanDirection dir, std::size_t H, std::size_t W);

using Sequences = std::array<Tensor, 4>;  // indexed by ScanDirection, each [B, H*W, C]

Sequences scan_expand(const Tensor& fmap);
Tensor scan_merge(const Sequences& seqs, std::size_t H, std::size_t W);

struct Params {
  std::array<s6::S6Params, 4> dirs;

  static Params init(std::size_t channels, std::size_t state_size, std::mt19937_64& rng);
  std::size_t channels() const { return dirs[0].d; }
};

struct Cache {
  std::size_t B = 0, C = 0, H = 0, W = 0;
  std::vector<s6::Cache> runs;  // index dir * B + b
};

Tensor forward(const Tensor& fmap, const Params& params, s6::ScanMode mode = s6::ScanMode::parallel,
               Cache* cache = nullptr);

struct Grads {
  Tensor x;
  std::array<s6::S6Params, 4> dirs;
};

Grads backward(const Params& params, const Cache& cache, const Tensor& gy);

}  // namespace gleason::ss2d
