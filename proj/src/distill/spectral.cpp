#include "distill/spectral.hpp"

#include <cmath>
#include <numbers>

#include "autodiff/ops.hpp"
#include "core/error.hpp"

namespace pdistill {

void SpectrogramSpec::validate() const {
  require(window_length >= 2, "window_length must be >= 2");
  require(hop_length >= 1 && hop_length <= window_length, "need 0 < hop_length <= window_length");
}

std::size_t SpectrogramSpec::frames(std::size_t length) const {
  if (length < window_length) {
    fail(ErrorCode::kInvalidArgument, "signal of " + std::to_string(length) + " samples is shorter than the " +
                                          std::to_string(window_length) + "-sample window");
  }
  return 1 + (length - window_length) / hop_length;
}

std::vector<double> SpectrogramSpec::window_values() const {
  std::vector<double> w(window_length, 1.0);
  if (window == WindowKind::kHann) {
    for (std::size_t n = 0; n < window_length; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(window_length));
  }
  return w;
}

void SpectrogramSpec::store(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "window_length", std::to_string(window_length));
  kv.set(prefix + "hop_length", std::to_string(hop_length));
  kv.set(prefix + "window", window == WindowKind::kHann ? "hann" : "rectangular");
}

SpectrogramSpec SpectrogramSpec::load(const KeyValues& kv, const std::string& prefix) {
  SpectrogramSpec s;
  s.window_length = kv.get_size(prefix + "window_length", s.window_length);
  s.hop_length = kv.get_size(prefix + "hop_length", s.hop_length);
  const std::string w = kv.get_string(prefix + "window", "hann");
  if (w == "hann") {
    s.window = WindowKind::kHann;
  } else if (w == "rectangular") {
    s.window = WindowKind::kRectangular;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown window '" + w + "'");
  }
  s.validate();
  return s;
}

namespace {

Tensor as_rows(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 3 && x.dim(1) == 1) return ops::reshape(x, Shape{x.dim(0), x.dim(2)});
  fail(ErrorCode::kShapeMismatch, "expected a waveform [B, T] or [B, 1, T], got " + shape_string(x.shape()));
}

}  // namespace

Tensor stft_power(const Tensor& x, const SpectrogramSpec& spec) {
  spec.validate();
  const Tensor rows = as_rows(x);
  const std::size_t batch = rows.dim(0), win = spec.window_length, bins = spec.bins();
  const std::size_t frames = spec.frames(rows.dim(1));

  // Window folded into the cosine and sine bases: one matmul per part.
  const auto w = spec.window_values();
  double energy = 0.0;
  for (const double v : w) energy += v * v;
  std::vector<double> cos_basis(win * bins), sin_basis(win * bins);
  for (std::size_t n = 0; n < win; ++n) {
    for (std::size_t k = 0; k < bins; ++k) {
      // Reduce n*k modulo win first to keep the angle small and exact.
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((n * k) % win) / static_cast<double>(win);
      cos_basis[n * bins + k] = w[n] * std::cos(angle);
      sin_basis[n * bins + k] = -w[n] * std::sin(angle);
    }
  }
  const Tensor framed = ops::reshape(ops::frame_signal(rows, win, spec.hop_length), Shape{batch * frames, win});
  const Tensor re = ops::matmul(framed, Tensor(Shape{win, bins}, std::move(cos_basis)));
  const Tensor im = ops::matmul(framed, Tensor(Shape{win, bins}, std::move(sin_basis)));
  const Tensor power = ops::scale(ops::add(ops::square(re), ops::square(im)), 1.0 / energy);
  return ops::reshape(power, Shape{batch, frames, bins});
}

Tensor power_loss(const Tensor& x_gen, const Tensor& y_ref, const SpectrogramSpec& spec) {
  if (x_gen.shape() != y_ref.shape()) {
    fail(ErrorCode::kShapeMismatch, "power loss needs equal shapes, got " + shape_string(x_gen.shape()) +
                                        " and " + shape_string(y_ref.shape()));
  }
  const Tensor gen = ops::mean_axis(stft_power(x_gen, spec), 1);
  const Tensor ref = ops::mean_axis(stft_power(y_ref, spec), 1);
  const double batch = static_cast<double>(gen.dim(0));
  return ops::scale(ops::sum(ops::square(ops::sub(gen, ref))), 1.0 / batch);
}

std::vector<double> mean_power_spectrum(const Tensor& x, const SpectrogramSpec& spec) {
  const Tensor avg = ops::mean_axis(stft_power(x.detach(), spec), 1);
  return {avg.data().begin(), avg.data().end()};
}

}  // namespace pdistill
