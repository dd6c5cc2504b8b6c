#pragma once

// Synthetic patient cohorts and consensus maps with known geometry.

#include <random>
#include <string>
#include <vector>

#include "gleason/pipeline.hpp"

namespace fixture {

using gleason::ClassLabel;
using gleason::pipeline::PatchRecord;

// `patients` patients, each with a random patch count in [lo, hi] and a
// dominant class drawn from `mix`; 70% of a patient's patches take the
// dominant class, the rest are spread uniformly.
inline std::vector<PatchRecord> cohort(std::size_t patients, std::uint64_t seed, std::size_t lo = 10,
                                       std::size_t hi = 40, std::vector<double> mix = {0.15, 0.35, 0.35, 0.15}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(lo, hi);
  std::discrete_distribution<int> dominant(mix.begin(), mix.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, 3);
  std::vector<PatchRecord> out;
  for (std::size_t p = 0; p < patients; ++p) {
    const std::string pid = "P" + std::to_string(1000 + p);
    const int dom = dominant(rng);
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      PatchRecord r;
      r.patient_id = pid;
      r.image_id = pid + "_img";
      r.x = i * 256;
      r.patch_id = gleason::pipeline::make_patch_id(r.image_id, r.x, 0);
      r.label = static_cast<ClassLabel>(u(rng) < 0.7 ? dom : any(rng));
      out.push_back(r);
    }
  }
  return out;
}

// Patients with identical patch counts and a uniform class mix.
inline std::vector<PatchRecord> uniform_cohort(std::size_t patients, std::size_t per_patient) {
  std::vector<PatchRecord> out;
  for (std::size_t p = 0; p < patients; ++p) {
    for (std::size_t i = 0; i < per_patient; ++i) {
      PatchRecord r;
      r.patient_id = "U" + std::to_string(p);
      r.image_id = r.patient_id;
      r.x = i;
      r.patch_id = r.patient_id + "_" + std::to_string(i);
      r.label = static_cast<ClassLabel>(i % 4);
      out.push_back(r);
    }
  }
  return out;
}

// width x height consensus with code `fill` everywhere and `code` inside
// [x0, x1) x [y0, y1).
inline gleason::pipeline::ConsensusMap rect_map(std::size_t width, std::size_t height, std::uint8_t fill,
                                                std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1,
                                                std::uint8_t code) {
  gleason::pipeline::ConsensusMap m{width, height, std::vector<std::uint8_t>(width * height, fill)};
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) m.codes[y * width + x] = code;
  return m;
}

}  // namespace fixture
