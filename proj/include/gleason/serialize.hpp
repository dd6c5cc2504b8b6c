#pragma once

// Tensor records: one JSON header line {"shape":[...],"name":"..."} followed by
// the little-endian float64 payload. A checkpoint is a run of records, then an
// index line {"index":[{"name","shape","offset"}...],"meta":{...}} and an
// 8-byte little-endian offset pointing at that index line.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "gleason/tensor.hpp"

namespace gleason {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t);
NamedTensor read_tensor(std::istream& is);

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gleason
