#include "wav_reader.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pdistill::testing {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

WavData read_wav(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = read_bytes(path);
  auto u16 = [&](std::size_t at) { return static_cast<std::uint16_t>(b.at(at) | (b.at(at + 1) << 8)); };
  auto u32 = [&](std::size_t at) { return static_cast<std::uint32_t>(u16(at) | (u16(at + 2) << 16)); };
  auto tag = [&](std::size_t at, const char* t) { return b.size() >= at + 4 && std::memcmp(&b[at], t, 4) == 0; };
  if (!tag(0, "RIFF") || !tag(8, "WAVE") || !tag(12, "fmt ") || !tag(36, "data")) {
    throw std::runtime_error("not a canonical WAV file");
  }
  if (u32(4) != b.size() - 8) throw std::runtime_error("RIFF size does not match the file");
  WavData w;
  w.format = u16(20);
  w.channels = u16(22);
  w.sample_rate = u32(24);
  w.bits = u16(34);
  const std::uint32_t data = u32(40);
  if (data + 44 != b.size() || data % 2) throw std::runtime_error("bad data chunk size");
  for (std::size_t i = 0; i < data / 2; ++i) w.samples.push_back(static_cast<std::int16_t>(u16(44 + 2 * i)));
  return w;
}

}  // namespace pdistill::testing
