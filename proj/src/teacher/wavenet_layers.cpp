#include "teacher/wavenet_layers.hpp"

#include <cmath>

#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace pdistill::wavenet {

void add_conv(ParameterSet& params, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t taps, std::uint64_t seed, double gain, bool bias) {
  const std::size_t n = cout * cin * taps;
  std::vector<double> w(n, 0.0);
  if (gain != 0.0) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(cin * taps));
    CounterRng rng(seed, stream_id(StreamPurpose::kInit, name));
    for (double& v : w) v = bound * (2.0 * rng.uniform_open() - 1.0);
  }
  params.add(name + ".w", Shape{cout, cin, taps}, std::move(w));
  if (bias) params.add(name + ".b", Shape{cout}, std::vector<double>(cout, 0.0));
}

void add_gated_layer(ParameterSet& params, const std::string& prefix, std::size_t residual_channels,
                     std::size_t gate_channels, std::size_t skip_channels, std::size_t cond_channels,
                     std::size_t filter_size, std::uint64_t seed) {
  require(gate_channels >= 2 && gate_channels % 2 == 0, "gate_channels must be even and >= 2");
  const std::size_t half = gate_channels / 2;
  add_conv(params, prefix + ".dil", gate_channels, residual_channels, filter_size, seed, 1.0);
  if (cond_channels > 0) add_conv(params, prefix + ".cond", gate_channels, cond_channels, 1, seed, 1.0, false);
  add_conv(params, prefix + ".res", residual_channels, half, 1, seed, 0.5);
  if (skip_channels > 0) add_conv(params, prefix + ".skip", skip_channels, half, 1, seed, 1.0);
}

Tensor conv(const ParameterSet& params, const std::string& name, const Tensor& x, std::size_t dilation) {
  const std::string bias_name = name + ".b";
  const Tensor bias = params.contains(bias_name) ? params.at(bias_name) : Tensor{};
  return ops::causal_conv1d(x, params.at(name + ".w"), bias, dilation);
}

Tensor conditioning_bias(const ParameterSet& params, const std::string& prefix,
                         const ConditioningSeq& c, std::size_t length) {
  const std::string name = prefix + ".cond.w";
  if (!params.contains(name) || c.empty()) return {};
  const Tensor framed = ops::causal_conv1d(c.frames, params.at(name), Tensor{}, 1);
  return ops::upsample_repeat(framed, c.frame_divisor, length);
}

GatedOutput gated_layer(const ParameterSet& params, const std::string& prefix, const Tensor& x,
                        const Tensor& cond_bias, std::size_t dilation) {
  Tensor pre = conv(params, prefix + ".dil", x, dilation);
  if (cond_bias.defined()) pre = ops::add(pre, cond_bias);
  const std::size_t gate = pre.dim(1), half = gate / 2;
  const Tensor h = ops::mul(ops::tanh(ops::slice_channels(pre, 0, half)),
                            ops::sigmoid(ops::slice_channels(pre, half, gate)));
  GatedOutput out;
  out.residual = ops::add(x, conv(params, prefix + ".res", h));
  if (params.contains(prefix + ".skip.w")) out.skip = conv(params, prefix + ".skip", h);
  return out;
}

}  // namespace pdistill::wavenet
