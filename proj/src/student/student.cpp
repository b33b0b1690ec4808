#include "student/student.hpp"

#include <cmath>

#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "distributions/distributions.hpp"
#include "teacher/wavenet_layers.hpp"

namespace pdistill {

void FlowConfig::validate() const {
  require(!flow_layers.empty(), "student needs at least one flow");
  for (const std::size_t n : flow_layers) require(n >= 1, "each flow needs at least one layer");
  require(filter_size >= 1, "filter_size must be >= 1");
  require(residual_channels >= 1, "residual_channels must be positive");
  require(gate_channels >= 2 && gate_channels % 2 == 0, "gate_channels must be even and >= 2");
  require(dilation_cycle >= 1 && dilation_cycle <= 20, "dilation_cycle must lie in [1, 20]");
}

std::size_t FlowConfig::dilation(std::size_t layer) const {
  return std::size_t{1} << (layer % dilation_cycle);
}

std::size_t FlowConfig::flow_receptive_field(std::size_t flow) const {
  require(flow < num_flows(), "flow index out of range");
  std::size_t field = 1;
  for (std::size_t l = 0; l < flow_layers[flow]; ++l) field += (filter_size - 1) * dilation(l);
  return field;
}

void FlowConfig::store(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "flow_layers", join_sizes(flow_layers));
  kv.set(prefix + "filter_size", std::to_string(filter_size));
  kv.set(prefix + "residual_channels", std::to_string(residual_channels));
  kv.set(prefix + "gate_channels", std::to_string(gate_channels));
  kv.set(prefix + "conditioning_channels", std::to_string(conditioning_channels));
  kv.set(prefix + "dilation_cycle", std::to_string(dilation_cycle));
}

FlowConfig FlowConfig::load(const KeyValues& kv, const std::string& prefix) {
  return load(kv, prefix, FlowConfig{});
}

FlowConfig FlowConfig::load(const KeyValues& kv, const std::string& prefix, const FlowConfig& defaults) {
  FlowConfig c;
  c.flow_layers = kv.get_size_list(prefix + "flow_layers", defaults.flow_layers);
  c.filter_size = kv.get_size(prefix + "filter_size", defaults.filter_size);
  c.residual_channels = kv.get_size(prefix + "residual_channels", defaults.residual_channels);
  c.gate_channels = kv.get_size(prefix + "gate_channels", defaults.gate_channels);
  c.conditioning_channels = kv.get_size(prefix + "conditioning_channels", defaults.conditioning_channels);
  c.dilation_cycle = kv.get_size(prefix + "dilation_cycle", defaults.dilation_cycle);
  c.validate();
  return c;
}

namespace {

std::string flow_prefix(std::size_t flow) { return "flow." + std::to_string(flow); }

}  // namespace

FlowStack::FlowStack(const FlowConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t r = config_.residual_channels;
  for (std::size_t i = 0; i < config_.num_flows(); ++i) {
    const std::string p = flow_prefix(i);
    wavenet::add_conv(params_, p + ".input", r, 1, 1, seed, 1.0);
    for (std::size_t l = 0; l < config_.flow_layers[i]; ++l) {
      wavenet::add_gated_layer(params_, p + ".layers." + std::to_string(l), r, config_.gate_channels, 0,
                               config_.conditioning_channels, config_.filter_size, seed);
    }
    // Zero head: mu = 0 and log s = 0, so every flow starts as the identity.
    wavenet::add_conv(params_, p + ".out", 2, r, 1, seed, 0.0);
  }
}

Tensor draw_latent(std::size_t batch, std::size_t length, CounterRng& rng) {
  require(batch >= 1 && length >= 1, "draw_latent needs batch >= 1 and length >= 1");
  std::vector<double> z(batch * length);
  for (double& v : z) v = rng.logistic();
  return Tensor(Shape{batch, 1, length}, std::move(z));
}

FlowOutput flow_apply(const FlowStack& stack, std::size_t flow, const Tensor& x_prev,
                      const ConditioningSeq& c) {
  const FlowConfig& cfg = stack.config();
  require(flow < cfg.num_flows(), "flow index out of range");
  if (x_prev.rank() != 3 || x_prev.dim(1) != 1) {
    fail(ErrorCode::kShapeMismatch, "flow input must be [B, 1, T], got " + shape_string(x_prev.shape()));
  }
  const std::size_t len = x_prev.dim(2);
  check_conditioning(c, x_prev.dim(0), len, cfg.conditioning_channels);
  const ParameterSet& params = stack.parameters();
  const std::string p = flow_prefix(flow);

  Tensor h = wavenet::conv(params, p + ".input", ops::shift_right(x_prev));
  for (std::size_t l = 0; l < cfg.flow_layers[flow]; ++l) {
    const std::string lp = p + ".layers." + std::to_string(l);
    const Tensor cond_bias = wavenet::conditioning_bias(params, lp, c, len);
    h = wavenet::gated_layer(params, lp, h, cond_bias, cfg.dilation(l)).residual;
  }
  const Tensor head = wavenet::conv(params, p + ".out", ops::relu(h));
  FlowOutput out;
  out.mu = ops::slice_channels(head, 0, 1);
  out.log_s = ops::clamp(ops::slice_channels(head, 1, 2), kMinLogScale, kMaxLogScale);
  out.s = ops::exp(out.log_s);
  out.x = ops::add(ops::mul(x_prev, out.s), out.mu);
  if (!ops::all_finite(out.x)) {
    fail(ErrorCode::kNonFinite, "non-finite activations in flow " + std::to_string(flow));
  }
  return out;
}

ComposedParams compose_params(const std::vector<FlowOutput>& per_flow) {
  require(!per_flow.empty(), "compose_params needs at least one flow");
  ComposedParams out{per_flow[0].mu, per_flow[0].s, per_flow[0].log_s};
  for (std::size_t i = 1; i < per_flow.size(); ++i) {
    const FlowOutput& f = per_flow[i];
    if (f.mu.shape() != out.mu_tot.shape()) {
      fail(ErrorCode::kShapeMismatch, "flow " + std::to_string(i) + " has shape " +
                                          shape_string(f.mu.shape()) + ", expected " +
                                          shape_string(out.mu_tot.shape()));
    }
    // Horner form of sum_i mu_i prod_{j>i} s_j.
    out.mu_tot = ops::add(ops::mul(out.mu_tot, f.s), f.mu);
    out.s_tot = ops::mul(out.s_tot, f.s);
    out.log_s_tot = ops::add(out.log_s_tot, f.log_s);
  }
  return out;
}

StudentOutput student_generate(const FlowStack& stack, const Tensor& z, const ConditioningSeq& c) {
  StudentOutput out;
  out.z = z;
  Tensor x = z;
  for (std::size_t i = 0; i < stack.config().num_flows(); ++i) {
    out.per_flow.push_back(flow_apply(stack, i, x, c));
    x = out.per_flow.back().x;
  }
  out.x = x;
  ComposedParams composed = compose_params(out.per_flow);
  out.mu_tot = composed.mu_tot;
  out.s_tot = composed.s_tot;
  out.log_s_tot = composed.log_s_tot;
  return out;
}

Tensor invert_flows(const FlowStack& stack, const Tensor& x, const ConditioningSeq& c) {
  if (x.rank() != 3 || x.dim(1) != 1) {
    fail(ErrorCode::kShapeMismatch, "invert_flows input must be [B, 1, T], got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), len = x.dim(2);
  std::vector<double> current(x.data().begin(), x.data().end());
  for (std::size_t i = stack.config().num_flows(); i-- > 0;) {
    std::vector<double> previous(batch * len, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      // Only the prefix up to t matters for (mu, s) at t.
      std::vector<double> prefix(batch * (t + 1));
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t u = 0; u <= t; ++u) prefix[b * (t + 1) + u] = previous[b * len + u];
      const FlowOutput f = flow_apply(stack, i, Tensor(Shape{batch, 1, t + 1}, std::move(prefix)), c);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t at = b * (t + 1) + t;
        previous[b * len + t] = (current[b * len + t] - f.mu[at]) / f.s[at];
      }
    }
    current = std::move(previous);
  }
  return Tensor(Shape{batch, 1, len}, std::move(current));
}

}  // namespace pdistill
