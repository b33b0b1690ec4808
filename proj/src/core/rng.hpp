#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace pdistill {

// Philox4x32-10 counter-based generator. A (seed, stream) pair names an
// independent sequence; the position within it is an explicit counter, so any
// draw can be reproduced without replaying the draws before it.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1); never returns 0 or 1.
  double uniform_open();
  // Standard logistic via inverse CDF of an open-interval uniform.
  double logistic();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return block_; }
  // Jumps to the start of block `block`; discards any buffered output.
  void seek(std::uint64_t block);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

// Well-known stream purposes. Stream ids combine a purpose with up to two
// indices (typically a step number and a batch row).
enum class StreamPurpose : std::uint32_t {
  kInit = 1,
  kBatch = 2,
  kLatent = 3,
  kInnerSamples = 4,
  kAncestral = 5,
  kCorpus = 6,
  kContrastive = 7,
  kDemo = 8,
  kTest = 9,
};

std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);
// Stream id derived from a name, used for per-parameter initialization.
std::uint64_t stream_id(StreamPurpose purpose, std::string_view name);

}  // namespace pdistill
