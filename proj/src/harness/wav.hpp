#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pdistill {

// 16-bit signed PCM, mono, little-endian, 44-byte header. Samples must lie
// in [-1, 1] and map to round(x * 32767); anything else throws.
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, std::uint32_t sample_rate);
void write_wav(std::span<const double> samples, std::uint32_t sample_rate, const std::filesystem::path& path);

}  // namespace pdistill
