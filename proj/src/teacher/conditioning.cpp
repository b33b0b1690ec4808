#include "teacher/conditioning.hpp"

#include <algorithm>
#include <string>

#include "core/error.hpp"

namespace pdistill {

ConditioningSeq ConditioningSeq::row(std::size_t b) const {
  return permuted({b});
}

ConditioningSeq ConditioningSeq::permuted(const std::vector<std::size_t>& order) const {
  if (empty()) return *this;
  const std::size_t ch = channels(), nf = num_frames(), stride = ch * nf;
  std::vector<double> values(order.size() * stride);
  for (std::size_t i = 0; i < order.size(); ++i) {
    require(order[i] < batch(), "conditioning row out of range");
    std::copy_n(frames.data().data() + order[i] * stride, stride, values.data() + i * stride);
  }
  return {Tensor(Shape{order.size(), ch, nf}, std::move(values)), frame_divisor};
}

ConditioningSeq ConditioningSeq::truncated(std::size_t samples) const {
  if (empty()) return *this;
  const std::size_t keep = std::min(num_frames(), (samples + frame_divisor - 1) / frame_divisor);
  const std::size_t ch = channels(), nf = num_frames();
  std::vector<double> values(batch() * ch * keep);
  for (std::size_t r = 0; r < batch() * ch; ++r) {
    std::copy_n(frames.data().data() + r * nf, keep, values.data() + r * keep);
  }
  return {Tensor(Shape{batch(), ch, keep}, std::move(values)), frame_divisor};
}

void check_conditioning(const ConditioningSeq& c, std::size_t batch, std::size_t length,
                        std::size_t channels) {
  if (channels == 0) {
    if (!c.empty() && c.channels() != 0) {
      fail(ErrorCode::kShapeMismatch, "model takes no conditioning but some was supplied");
    }
    return;
  }
  if (c.empty()) fail(ErrorCode::kShapeMismatch, "model requires conditioning features");
  if (c.frames.rank() != 3 || c.channels() != channels) {
    fail(ErrorCode::kShapeMismatch, "conditioning " + shape_string(c.frames.shape()) + " should have " +
                                        std::to_string(channels) + " channels");
  }
  if (c.batch() != batch) {
    fail(ErrorCode::kShapeMismatch, "conditioning batch " + std::to_string(c.batch()) +
                                        " does not match input batch " + std::to_string(batch));
  }
  if (c.frame_divisor == 0 || c.upsampled_length() < length) {
    fail(ErrorCode::kShapeMismatch, "conditioning covers " + std::to_string(c.upsampled_length()) +
                                        " samples, input has " + std::to_string(length));
  }
}

}  // namespace pdistill
