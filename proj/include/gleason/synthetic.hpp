#pragma once

#include <cstdint>
#include <vector>

#include "gleason/image.hpp"

namespace gleason::synth {

// Oriented sinusoidal gratings whose spatial frequency depends on the class
// (2, 4, 6 or 8 cycles per image width), with random orientation, phase,
// contrast, per-channel tint and pixel noise.
struct TextureSet {
  std::vector<Image8> images;
  std::vector<int> labels;
};

inline constexpr double kClassCycles[4] = {2.0, 4.0, 6.0, 8.0};

// Classes are assigned round-robin so every class gets count/4 (+1) samples.
TextureSet texture_patches(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace gleason::synth
