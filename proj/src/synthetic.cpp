#include "gleason/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace gleason::synth {

TextureSet texture_patches(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> contrast(0.25, 0.45);
  std::uniform_real_distribution<double> tint(-0.1, 0.1);
  std::normal_distribution<double> noise(0.0, 0.06);

  TextureSet set;
  set.images.reserve(count);
  set.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 4);
    const double theta = angle(rng);
    const double phi = phase(rng);
    const double amp = contrast(rng);
    const double k = 2.0 * std::numbers::pi * kClassCycles[label] / static_cast<double>(size);
    const double kx = k * std::cos(theta), ky = k * std::sin(theta);
    double offset[3];
    for (double& o : offset) o = 0.5 + tint(rng);

    Image8 img(size, size, 3);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double wave = amp * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phi);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = std::clamp(offset[c] + wave + noise(rng), 0.0, 1.0);
          img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
    set.images.push_back(std::move(img));
    set.labels.push_back(label);
  }
  return set;
}

}  // namespace gleason::synth
