#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"

namespace pdistill {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t counter = 0;
};

// Layout, all little-endian:
//   "PDWN" | u32 version | u64 blob length | config blob (key=value text)
//   | u32 entry count | entries | u64 step | u64 x3 rng state | u32 crc32
// Each entry is u32 name length | name | u32 rank | u64 dims | f64 values.
// The CRC covers every byte before it.
struct Checkpoint {
  KeyValues config;  // always holds `kind`
  std::vector<CheckpointEntry> entries;
  std::uint64_t step = 0;
  RngState rng;

  std::string kind() const { return config.get_string("kind", ""); }
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes to a temporary file and renames it over `path`, so a failed write
// never clobbers the previous checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws kCheckpointKind unless the checkpoint holds a `kind` model.
void expect_kind(const Checkpoint& ckpt, const std::string& kind);

void store_parameters(Checkpoint& ckpt, const ParameterSet& params);
// Copies values into `params`; names and shapes must match exactly.
void restore_parameters(const Checkpoint& ckpt, ParameterSet& params);

}  // namespace pdistill
