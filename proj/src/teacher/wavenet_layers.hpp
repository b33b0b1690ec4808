#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "autodiff/tensor.hpp"
#include "teacher/conditioning.hpp"

// Building blocks shared by the teacher, the student flows and the phone
// classifier. Parameters live in a ParameterSet under dotted prefixes.
namespace pdistill::wavenet {

// `<name>.w` [cout, cin, taps] drawn uniformly with variance gain^2 / fan_in,
// and `<name>.b` [cout] of zeros when `bias` is set.
void add_conv(ParameterSet& params, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t taps, std::uint64_t seed, double gain, bool bias = true);

// Weights of one gated residual layer under `prefix`: dil, cond (when
// cond_channels > 0), res and, when skip_channels > 0, skip.
void add_gated_layer(ParameterSet& params, const std::string& prefix, std::size_t residual_channels,
                     std::size_t gate_channels, std::size_t skip_channels, std::size_t cond_channels,
                     std::size_t filter_size, std::uint64_t seed);

Tensor conv(const ParameterSet& params, const std::string& name, const Tensor& x,
            std::size_t dilation = 1);

// V * c for one layer at sample rate, [B, gate, length]. Computed at frame
// rate and repeated, which equals a 1x1 convolution over the upsampled c.
// Undefined when the layer has no conditioning weights.
Tensor conditioning_bias(const ParameterSet& params, const std::string& prefix,
                         const ConditioningSeq& c, std::size_t length);

struct GatedOutput {
  Tensor residual;
  Tensor skip;  // undefined for layers without a skip path
};

// h = tanh(filter) * sigmoid(gate) with [filter | gate] = W * x + V * c;
// residual = x + res(h), skip = skip(h). The first half of the dilated conv
// output channels is the filter path, the second half the gate path.
GatedOutput gated_layer(const ParameterSet& params, const std::string& prefix, const Tensor& x,
                        const Tensor& cond_bias, std::size_t dilation);

}  // namespace pdistill::wavenet
