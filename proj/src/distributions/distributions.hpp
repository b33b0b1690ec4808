#pragma once

#include <cstddef>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/rng.hpp"

namespace pdistill {

// Lower bound applied to every learned log-scale.
inline constexpr double kMinLogScale = -7.0;
inline constexpr double kMaxLogScale = 7.0;

struct LogisticParams {
  double mu = 0.0;
  double log_s = 0.0;

  double scale() const;
  static LogisticParams from_scale(double mu, double s);
};

struct MixtureOfLogistics {
  std::vector<double> logits;
  std::vector<double> mus;
  std::vector<double> log_ss;

  std::size_t components() const { return logits.size(); }
  // Throws unless all three vectors have the same non-zero length.
  void validate() const;
  std::vector<double> weights() const;
  double mean() const;
};

// Uniform grid of 2^bit_depth bin centers spanning [-1, 1].
struct DiscretizationSpec {
  int bit_depth = 8;

  std::size_t bins() const;
  double bin_width() const;
  double center(std::size_t index) const;
  // Index of the bin whose center is `x`; throws if x is not on the grid.
  std::size_t index_of(double x) const;
  // Nearest bin center, clamping to the domain.
  double quantize(double x) const;
};

double softplus(double x);
double sigmoid(double x);

double logistic_log_density(double x, const LogisticParams& p);
// Inverse CDF: mu + s * ln(u / (1 - u)). Requires 0 < u < 1.
double logistic_sample(const LogisticParams& p, double u);
// Differential entropy in nats: ln s + 2.
double logistic_entropy(const LogisticParams& p);

double mol_log_density(double x, const MixtureOfLogistics& m);
// Log mass of the bin centred on `x`; the outermost bins absorb the tails.
double discretized_mol_log_prob(double x_bin_center, const MixtureOfLogistics& m,
                                const DiscretizationSpec& d);
// Picks a component by inverse CDF on the mixture weights, then draws from
// it. The result is clamped to [-1, 1] when `domain` is given.
double mol_sample(const MixtureOfLogistics& m, CounterRng& rng,
                  const DiscretizationSpec* domain = nullptr);

// Per-timestep mixture parameters, each [B, K, T].
struct MixtureTensors {
  Tensor logits;
  Tensor mus;
  Tensor log_ss;

  std::size_t batch() const { return logits.dim(0); }
  std::size_t components() const { return logits.dim(1); }
  std::size_t length() const { return logits.dim(2); }
  MixtureOfLogistics at(std::size_t b, std::size_t t) const;
};

namespace ops {

// samples [B, M, T]; returns [B, M, T] with log p(samples[b, m, t]) under the
// mixture at (b, t). Differentiable in the samples and all mixture parameters.
Tensor mol_log_density(const Tensor& samples, const MixtureTensors& mixture);

// x [B, 1, T] of bin centers; returns [B, 1, T] log bin masses.
// Differentiable in the mixture parameters.
Tensor discretized_mol_log_prob(const Tensor& x, const MixtureTensors& mixture,
                                const DiscretizationSpec& spec);

}  // namespace ops
}  // namespace pdistill
