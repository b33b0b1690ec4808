#include "harness/wav.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "core/error.hpp"

namespace pdistill {
namespace {

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, std::uint32_t sample_rate) {
  require(sample_rate > 0, "sample rate must be positive");
  const std::uint64_t data_bytes = 2ull * samples.size();
  require(data_bytes + 36 <= UINT32_MAX, "too many samples for a WAV file");
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put(out, 36 + data_bytes, 4);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put(out, 16, 4);
  put(out, 1, 2);  // PCM
  put(out, 1, 2);  // mono
  put(out, sample_rate, 4);
  put(out, 2ull * sample_rate, 4);  // byte rate
  put(out, 2, 2);                   // block align
  put(out, 16, 2);
  put_tag(out, "data");
  put(out, data_bytes, 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i];
    if (!(x >= -1.0 && x <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "sample " + std::to_string(i) + " = " + std::to_string(x) +
                                            " lies outside [-1, 1]");
    }
    const auto q = static_cast<std::int16_t>(std::lround(x * 32767.0));
    put(out, static_cast<std::uint16_t>(q), 2);
  }
  return out;
}

void write_wav(std::span<const double> samples, std::uint32_t sample_rate, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_wav(samples, sample_rate);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace pdistill
