#include "flap/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flap {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open checkpoint for writing: " + path);
  }
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(params.count()));
  for (const auto& [name, tensor] : params.items()) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(tensor.rank()));
    for (size_t e : tensor.shape()) {
      write_u64(os, e);
    }
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!os) {
    throw std::runtime_error("short write while saving checkpoint: " + path);
  }
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a FLAP checkpoint: " + path);
  }
  uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  uint32_t count = read_u32(is);
  if (count != params.count()) {
    throw std::runtime_error("checkpoint has " + std::to_string(count) +
                             " parameters, model expects " +
                             std::to_string(params.count()));
  }
  for (uint32_t p = 0; p < count; ++p) {
    uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = read_u32(is);
    std::vector<size_t> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<size_t>(read_u64(is));
    }
    if (!params.contains(name)) {
      throw std::runtime_error("checkpoint parameter not in model: " + name);
    }
    Tensor& t = params.get(name);
    if (t.shape() != shape) {
      throw std::runtime_error("shape mismatch for " + name +
                               ": checkpoint has different extents");
    }
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) {
      throw std::runtime_error("truncated checkpoint while reading " + name);
    }
  }
}

}  // namespace flap
