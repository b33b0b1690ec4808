#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"
#include "core/rng.hpp"
#include "distributions/distributions.hpp"
#include "teacher/conditioning.hpp"
#include "teacher/wavenet_layers.hpp"

namespace pdistill {

struct TeacherConfig {
  std::size_t num_stacks = 2;
  std::size_t layers_per_stack = 6;
  std::size_t filter_size = 3;
  std::size_t residual_channels = 64;
  // Total output channels of each dilated conv, split evenly into the
  // filter and gate halves.
  std::size_t gate_channels = 64;
  std::size_t skip_channels = 64;
  std::size_t num_mixtures = 10;
  std::size_t conditioning_channels = 0;
  int bit_depth = 8;

  void validate() const;
  std::size_t num_layers() const { return num_stacks * layers_per_stack; }
  // 2^(layer mod layers_per_stack).
  std::size_t dilation(std::size_t layer) const;
  DiscretizationSpec discretization() const { return {bit_depth}; }

  void store(KeyValues& kv, const std::string& prefix) const;
  static TeacherConfig load(const KeyValues& kv, const std::string& prefix);
  static TeacherConfig load(const KeyValues& kv, const std::string& prefix,
                            const TeacherConfig& defaults);
};

// 1 + stacks * (filter - 1) * (2^layers_per_stack - 1).
std::size_t receptive_field(const TeacherConfig& config);

// Autoregressive WaveNet teacher with a discretized mixture-of-logistics head.
class TeacherNet {
 public:
  TeacherNet(const TeacherConfig& config, std::uint64_t seed);

  const TeacherConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  // Frozen nets still pass gradients to their inputs but never to weights.
  void set_frozen(bool frozen) { params_.set_requires_grad(!frozen); }

  // x [B, 1, T] in [-1, 1]. The distribution at t sees x only through the
  // one-step delayed copy, so it depends on x_{<t} and on c up to t.
  MixtureTensors forward(const Tensor& x, const ConditioningSeq& c) const;

  // -log P(x_t | x_<t, c) per timestep, [B, 1, T]; x must hold bin centers.
  Tensor nll_per_timestep(const Tensor& x, const ConditioningSeq& c) const;
  // Mean of nll_per_timestep over batch and time.
  Tensor nll(const Tensor& x, const ConditioningSeq& c) const;

  // One gated residual block given conditioning already at sample rate,
  // c_upsampled [B, C, T] (undefined when the net is unconditioned).
  wavenet::GatedOutput gated_residual_layer(const Tensor& x, const Tensor& c_upsampled,
                                            std::size_t layer) const;

 private:
  TeacherConfig config_;
  ParameterSet params_;
};

// Sequential generation with per-layer circular buffers holding the last
// (filter_size - 1) * dilation inputs of each layer. `c` must be a batch of
// one covering `length` samples. Draws two uniforms from `rng` per timestep.
std::vector<double> ancestral_sample(const TeacherNet& net, const ConditioningSeq& c,
                                     std::size_t length, CounterRng& rng);

}  // namespace pdistill
