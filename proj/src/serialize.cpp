#include "gleason/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gleason/errors.hpp"

namespace gleason {

namespace {

static_assert(sizeof(double) == 8);

void put_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

std::uint64_t get_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw InputError("truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  nlohmann::json header = {{"shape", t.shape()}, {"name", name}};
  os << header.dump() << '\n';
  for (double v : t.data()) put_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

NamedTensor read_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("missing tensor header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad tensor header: ") + e.what());
  }
  if (!header.contains("shape") || !header.contains("name")) throw InputError("tensor header lacks shape/name");
  Shape shape = header["shape"].get<Shape>();
  Tensor t(shape);
  for (auto& v : t.data()) v = std::bit_cast<double>(get_u64_le(is));
  return {header["name"].get<std::string>(), std::move(t)};
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw InputError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write checkpoint " + path);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& nt : ckpt.tensors) {
    index.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()},
                     {"offset", static_cast<std::uint64_t>(os.tellp())}});
    write_tensor(os, nt.name, nt.tensor);
  }
  const auto index_offset = static_cast<std::uint64_t>(os.tellp());
  nlohmann::json block = {{"index", index}, {"meta", ckpt.meta}};
  os << block.dump() << '\n';
  put_u64_le(os, index_offset);
  if (!os) throw InputError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path);
  is.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(is.tellg());
  if (size < 8) throw InputError("checkpoint too small: " + path);
  is.seekg(static_cast<std::streamoff>(size - 8));
  const std::uint64_t index_offset = get_u64_le(is);
  if (index_offset >= size) throw InputError("corrupt checkpoint index offset: " + path);
  is.seekg(static_cast<std::streamoff>(index_offset));
  std::string line;
  std::getline(is, line);
  nlohmann::json block;
  try {
    block = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt checkpoint index in " + path + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = block.value("meta", nlohmann::json::object());
  for (const auto& entry : block.at("index")) {
    is.clear();
    is.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    NamedTensor nt = read_tensor(is);
    if (nt.name != entry.at("name").get<std::string>()) throw InputError("checkpoint index/name mismatch");
    ckpt.tensors.push_back(std::move(nt));
  }
  return ckpt;
}

}  // namespace gleason
