#include "flap/wav.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace flap::audio {

namespace {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0] | (p[1] << 8) | (p[2] << 16) |
                               (p[3] << 24));
}

}  // namespace

std::vector<double> load_wav(const std::string& path, uint32_t expected_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open WAV file: " + path);
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path);
  }

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t pos = 12;
  const uint8_t* data = nullptr;
  size_t data_size = 0;

  while (pos + 8 <= bytes.size()) {
    const uint8_t* p = bytes.data() + pos;
    uint32_t chunk_size = read_u32(p + 4);
    if (std::memcmp(p, "fmt ", 4) == 0) {
      if (chunk_size < 16 || pos + 8 + 16 > bytes.size()) {
        throw std::runtime_error("malformed fmt chunk: " + path);
      }
      format = read_u16(p + 8);
      channels = read_u16(p + 10);
      rate = read_u32(p + 12);
      bits = read_u16(p + 22);
      have_fmt = true;
    } else if (std::memcmp(p, "data", 4) == 0) {
      data = p + 8;
      data_size = std::min<size_t>(chunk_size, bytes.size() - pos - 8);
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }

  if (!have_fmt || data == nullptr) {
    throw std::runtime_error("WAV missing fmt or data chunk: " + path);
  }
  if (format != 1) {
    throw std::runtime_error("WAV format error: expected PCM (1), got codec " +
                             std::to_string(format) + " in " + path);
  }
  if (channels != 1) {
    throw std::runtime_error("WAV format error: expected mono, got " +
                             std::to_string(channels) + " channels in " + path);
  }
  if (bits != 16) {
    throw std::runtime_error("WAV format error: expected 16-bit, got " +
                             std::to_string(bits) + "-bit in " + path);
  }
  if (rate != expected_rate) {
    throw std::runtime_error(
        "WAV format error: expected " + std::to_string(expected_rate) +
        " Hz, got " + std::to_string(rate) + " Hz in " + path);
  }

  size_t n = data_size / 2;
  std::vector<double> samples(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t v = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    samples[i] = static_cast<double>(v) / 32768.0;
  }
  return samples;
}

void write_wav(const std::string& path, const std::vector<double>& samples,
               uint32_t sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open WAV for writing: " + path);
  }
  uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
  uint32_t riff_size = 36 + data_size;
  uint16_t block_align = 2, bits = 16, channels = 1, pcm = 1;
  uint32_t byte_rate = sample_rate * block_align;

  auto put16 = [&os](uint16_t v) {
    os.write(reinterpret_cast<const char*>(&v), 2);
  };
  auto put32 = [&os](uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  };

  os.write("RIFF", 4);
  put32(riff_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(16);
  put16(pcm);
  put16(channels);
  put32(sample_rate);
  put32(byte_rate);
  put16(block_align);
  put16(bits);
  os.write("data", 4);
  put32(data_size);
  for (double s : samples) {
    double clipped = std::clamp(s, -1.0, 1.0);
    auto v = static_cast<int16_t>(std::lrint(clipped * 32767.0));
    put16(static_cast<uint16_t>(v));
  }
  if (!os) {
    throw std::runtime_error("short write: " + path);
  }
}

}  // namespace flap::audio
