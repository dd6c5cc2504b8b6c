#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gleason/tensor.hpp"

namespace gleason {

// 8-bit interleaved image: pixels[(y * width + x) * channels + c].
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }

  Image8 crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const;
};

// Throws InputError when the file cannot be read or decoded.
Image8 read_png(const std::string& path, std::size_t channels);
void write_png(const std::string& path, const Image8& img);

// Box-filter downsampling by an integer factor (width and height must divide).
Image8 downsample(const Image8& img, std::size_t factor);

// [C, H, W] tensor with values (v / 255 - 0.5) / 0.25.
Tensor image_to_tensor(const Image8& img);

}  // namespace gleason
