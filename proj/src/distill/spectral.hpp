#pragma once

#include <cstddef>
#include <string>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"

namespace pdistill {

enum class WindowKind { kHann, kRectangular };

struct SpectrogramSpec {
  std::size_t window_length = 256;
  std::size_t hop_length = 64;
  WindowKind window = WindowKind::kHann;

  void validate() const;
  std::size_t bins() const { return window_length / 2 + 1; }
  std::size_t frames(std::size_t length) const;
  // Periodic Hann or all ones.
  std::vector<double> window_values() const;

  void store(KeyValues& kv, const std::string& prefix) const;
  static SpectrogramSpec load(const KeyValues& kv, const std::string& prefix);
};

// |DFT(w * frame)|^2 / sum(w^2) for the one-sided bins 0..W/2.
// x is [B, T] or [B, 1, T]; returns [B, frames, bins].
Tensor stft_power(const Tensor& x, const SpectrogramSpec& spec);

// Squared L2 distance between the frame-averaged power spectra of x_gen and
// y_ref, averaged over the batch.
Tensor power_loss(const Tensor& x_gen, const Tensor& y_ref, const SpectrogramSpec& spec);

// Frame-averaged power spectrum, [B, bins]. Values only.
std::vector<double> mean_power_spectrum(const Tensor& x, const SpectrogramSpec& spec);

}  // namespace pdistill
