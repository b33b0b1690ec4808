#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string_view>

#include "autodiff/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// at least one input requires a gradient; with no active tape the ops are plain
// value computations.
namespace pdistill::ops {

enum class Elementwise { kAdd, kSub, kMul, kSigmoid, kTanh, kExp, kLog, kNeg };

// Binary kinds broadcast rank-matched operands along size-1 dimensions (a
// size-1 operand of any rank also broadcasts). Unary kinds ignore `b`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
// Hard clamp; the gradient is zero where the input lies outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);
// Clamps the value but passes the gradient through unchanged.
Tensor clamp_straight_through(const Tensor& a, double lo, double hi);

// input [B, Cin, T], weight [Cout, Cin, F], optional bias [Cout]. Left-pads
// with (F-1)*dilation zeros: output[t] sees input[t - (F-1-k)*dilation] through
// tap k, so the last tap is the current sample.
Tensor causal_conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t dilation);

// Delays the last axis by one step, filling position 0 with zero.
Tensor shift_right(const Tensor& x);
// [B, C, F] -> [B, C, length]; each frame repeated `factor` times.
Tensor upsample_repeat(const Tensor& x, std::size_t factor, std::size_t length);
// Channel range [begin, end) of a [B, C, T] tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);
// Range [begin, end) along the last axis.
Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Keeps the reduced axis with size 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
// Overflow-safe log(sum(exp(x))) along `axis`, keeping it with size 1.
Tensor logsumexp(const Tensor& x, std::size_t axis);

// [B, C, T] -> [B, C, C], the time-normalized channel Gram matrix X X^T / T.
Tensor gram(const Tensor& x);
// [B, T] -> [B, frames, window] with frames = 1 + (T - window) / hop.
Tensor frame_signal(const Tensor& x, std::size_t window, std::size_t hop);

bool all_finite(const Tensor& x);
// Throws kNonFinite naming `what` if any value is NaN or infinite.
void check_finite(const Tensor& x, std::string_view what);

namespace internal {

using BackwardFn = std::function<void(detail::Node&)>;

bool should_track(std::initializer_list<const Tensor*> inputs);
// Wraps a freshly computed value; records it on the active tape if `track`.
Tensor make_result(Shape shape, std::vector<double> value, const char* op, bool track,
                   BackwardFn backward);

}  // namespace internal
}  // namespace pdistill::ops
