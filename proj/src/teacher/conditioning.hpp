#pragma once

#include <cstddef>

#include "autodiff/tensor.hpp"

namespace pdistill {

// Frame-rate conditioning features, [B, C, frames]. Upsampled to the sample
// rate by repeating each frame `frame_divisor` times.
struct ConditioningSeq {
  Tensor frames;
  std::size_t frame_divisor = 1;

  bool empty() const { return !frames.defined(); }
  std::size_t channels() const { return empty() ? 0 : frames.dim(1); }
  std::size_t batch() const { return empty() ? 0 : frames.dim(0); }
  std::size_t num_frames() const { return empty() ? 0 : frames.dim(2); }
  std::size_t upsampled_length() const { return num_frames() * frame_divisor; }

  // Single batch row as a batch of one.
  ConditioningSeq row(std::size_t b) const;
  // Rows reordered by `order` (same length as the batch).
  ConditioningSeq permuted(const std::vector<std::size_t>& order) const;
  // Frames covering the first `samples` samples.
  ConditioningSeq truncated(std::size_t samples) const;
};

// Throws unless `c` covers `length` samples for a batch of `batch` and has
// the expected channel count.
void check_conditioning(const ConditioningSeq& c, std::size_t batch, std::size_t length,
                        std::size_t channels);

}  // namespace pdistill
