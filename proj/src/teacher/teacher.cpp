#include "teacher/teacher.hpp"

#include <cmath>
#include <limits>

#include "autodiff/ops.hpp"
#include "core/error.hpp"

namespace pdistill {

void TeacherConfig::validate() const {
  require(num_stacks >= 1 && layers_per_stack >= 1, "teacher needs at least one layer");
  require(layers_per_stack <= 20, "layers_per_stack too large");
  require(filter_size >= 1, "filter_size must be >= 1");
  require(residual_channels >= 1 && skip_channels >= 1, "channel counts must be positive");
  require(gate_channels >= 2 && gate_channels % 2 == 0, "gate_channels must be even and >= 2");
  require(num_mixtures >= 1, "num_mixtures must be >= 1");
  require(bit_depth >= 1 && bit_depth <= 16, "bit_depth must lie in [1, 16]");
}

std::size_t TeacherConfig::dilation(std::size_t layer) const {
  return std::size_t{1} << (layer % layers_per_stack);
}

void TeacherConfig::store(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "num_stacks", std::to_string(num_stacks));
  kv.set(prefix + "layers_per_stack", std::to_string(layers_per_stack));
  kv.set(prefix + "filter_size", std::to_string(filter_size));
  kv.set(prefix + "residual_channels", std::to_string(residual_channels));
  kv.set(prefix + "gate_channels", std::to_string(gate_channels));
  kv.set(prefix + "skip_channels", std::to_string(skip_channels));
  kv.set(prefix + "num_mixtures", std::to_string(num_mixtures));
  kv.set(prefix + "conditioning_channels", std::to_string(conditioning_channels));
  kv.set(prefix + "bit_depth", std::to_string(bit_depth));
}

TeacherConfig TeacherConfig::load(const KeyValues& kv, const std::string& prefix) {
  return load(kv, prefix, TeacherConfig{});
}

TeacherConfig TeacherConfig::load(const KeyValues& kv, const std::string& prefix,
                                  const TeacherConfig& defaults) {
  TeacherConfig c;
  c.num_stacks = kv.get_size(prefix + "num_stacks", defaults.num_stacks);
  c.layers_per_stack = kv.get_size(prefix + "layers_per_stack", defaults.layers_per_stack);
  c.filter_size = kv.get_size(prefix + "filter_size", defaults.filter_size);
  c.residual_channels = kv.get_size(prefix + "residual_channels", defaults.residual_channels);
  c.gate_channels = kv.get_size(prefix + "gate_channels", defaults.gate_channels);
  c.skip_channels = kv.get_size(prefix + "skip_channels", defaults.skip_channels);
  c.num_mixtures = kv.get_size(prefix + "num_mixtures", defaults.num_mixtures);
  c.conditioning_channels = kv.get_size(prefix + "conditioning_channels", defaults.conditioning_channels);
  c.bit_depth = static_cast<int>(kv.get_int(prefix + "bit_depth", defaults.bit_depth));
  c.validate();
  return c;
}

std::size_t receptive_field(const TeacherConfig& config) {
  config.validate();
  return 1 + config.num_stacks * (config.filter_size - 1) * ((std::size_t{1} << config.layers_per_stack) - 1);
}

namespace {

std::string layer_prefix(std::size_t layer) { return "layers." + std::to_string(layer); }

}  // namespace

TeacherNet::TeacherNet(const TeacherConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t r = config_.residual_channels, s = config_.skip_channels, k = config_.num_mixtures;
  wavenet::add_conv(params_, "input", r, 1, 1, seed, 1.0);
  for (std::size_t l = 0; l < config_.num_layers(); ++l) {
    wavenet::add_gated_layer(params_, layer_prefix(l), r, config_.gate_channels, s,
                             config_.conditioning_channels, config_.filter_size, seed);
  }
  wavenet::add_conv(params_, "head.hidden", s, s, 1, seed, 1.0);
  wavenet::add_conv(params_, "head.out", 3 * k, s, 1, seed, 0.3);
  // Spread the component locations over the domain and start them narrow.
  auto bias = params_.at("head.out.b").mutable_data();
  for (std::size_t i = 0; i < k; ++i) {
    bias[k + i] = k == 1 ? 0.0 : -0.9 + 1.8 * static_cast<double>(i) / static_cast<double>(k - 1);
    bias[2 * k + i] = -2.5;
  }
}

wavenet::GatedOutput TeacherNet::gated_residual_layer(const Tensor& x, const Tensor& c_upsampled,
                                                      std::size_t layer) const {
  require(layer < config_.num_layers(), "layer index out of range");
  Tensor cond_bias;
  if (c_upsampled.defined() && config_.conditioning_channels > 0) {
    if (c_upsampled.rank() != 3 || c_upsampled.dim(2) != x.dim(2) || c_upsampled.dim(0) != x.dim(0)) {
      fail(ErrorCode::kShapeMismatch, "conditioning " + shape_string(c_upsampled.shape()) +
                                          " does not match layer input " + shape_string(x.shape()));
    }
    cond_bias = wavenet::conv(params_, layer_prefix(layer) + ".cond", c_upsampled);
  }
  return wavenet::gated_layer(params_, layer_prefix(layer), x, cond_bias, config_.dilation(layer));
}

MixtureTensors TeacherNet::forward(const Tensor& x, const ConditioningSeq& c) const {
  if (x.rank() != 3 || x.dim(1) != 1 || x.dim(2) == 0) {
    fail(ErrorCode::kShapeMismatch, "teacher input must be [B, 1, T], got " + shape_string(x.shape()));
  }
  for (const double v : x.data()) {
    if (!(v >= -1.0 && v <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "teacher input outside [-1, 1]: " + std::to_string(v));
    }
  }
  const std::size_t len = x.dim(2);
  check_conditioning(c, x.dim(0), len, config_.conditioning_channels);

  Tensor h = wavenet::conv(params_, "input", ops::shift_right(x));
  Tensor skip_sum;
  for (std::size_t l = 0; l < config_.num_layers(); ++l) {
    const Tensor cond_bias = wavenet::conditioning_bias(params_, layer_prefix(l), c, len);
    auto out = wavenet::gated_layer(params_, layer_prefix(l), h, cond_bias, config_.dilation(l));
    h = out.residual;
    skip_sum = skip_sum.defined() ? ops::add(skip_sum, out.skip) : out.skip;
  }
  Tensor head = wavenet::conv(params_, "head.hidden", ops::relu(skip_sum));
  head = wavenet::conv(params_, "head.out", ops::relu(head));
  const std::size_t k = config_.num_mixtures;
  return {ops::slice_channels(head, 0, k), ops::slice_channels(head, k, 2 * k),
          ops::clamp(ops::slice_channels(head, 2 * k, 3 * k), kMinLogScale,
                     std::numeric_limits<double>::infinity())};
}

Tensor TeacherNet::nll_per_timestep(const Tensor& x, const ConditioningSeq& c) const {
  const MixtureTensors mix = forward(x, c);
  return ops::neg(ops::discretized_mol_log_prob(x, mix, config_.discretization()));
}

Tensor TeacherNet::nll(const Tensor& x, const ConditioningSeq& c) const {
  return ops::mean(nll_per_timestep(x, c));
}

}  // namespace pdistill
