#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"
#include "core/rng.hpp"
#include "teacher/conditioning.hpp"

namespace pdistill {

struct FlowConfig {
  // Layer count of each flow, applied in order. The last is the largest by
  // default.
  std::vector<std::size_t> flow_layers{4, 4, 4, 8};
  std::size_t filter_size = 3;
  std::size_t residual_channels = 64;
  std::size_t gate_channels = 64;
  std::size_t conditioning_channels = 0;
  // Dilations restart at 1 every `dilation_cycle` layers.
  std::size_t dilation_cycle = 10;

  void validate() const;
  std::size_t num_flows() const { return flow_layers.size(); }
  std::size_t dilation(std::size_t layer) const;
  // Receptive field of one flow's (mu, s) in its input, counting the shift.
  std::size_t flow_receptive_field(std::size_t flow) const;

  void store(KeyValues& kv, const std::string& prefix) const;
  static FlowConfig load(const KeyValues& kv, const std::string& prefix);
  static FlowConfig load(const KeyValues& kv, const std::string& prefix, const FlowConfig& defaults);
};

// N unshared flows. Parameters of flow i live under "flow.<i>.".
class FlowStack {
 public:
  FlowStack(const FlowConfig& config, std::uint64_t seed);

  const FlowConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  FlowConfig config_;
  ParameterSet params_;
};

struct FlowOutput {
  Tensor x;      // x_prev * s + mu
  Tensor mu;
  Tensor s;
  Tensor log_s;  // clamped to [-7, 7]
};

struct StudentOutput {
  Tensor z;
  Tensor x;
  Tensor mu_tot;
  Tensor s_tot;
  Tensor log_s_tot;
  std::vector<FlowOutput> per_flow;
};

// Standard logistic noise [B, 1, T].
Tensor draw_latent(std::size_t batch, std::size_t length, CounterRng& rng);

// One flow: (mu, s) from the one-step delayed x_prev and c.
FlowOutput flow_apply(const FlowStack& stack, std::size_t flow, const Tensor& x_prev,
                      const ConditioningSeq& c);

struct ComposedParams {
  Tensor mu_tot;
  Tensor s_tot;
  Tensor log_s_tot;
};

// s_tot = prod_i s_i, mu_tot = sum_i mu_i prod_{j>i} s_j.
ComposedParams compose_params(const std::vector<FlowOutput>& per_flow);

// All flows in one pass each; no loop over time.
StudentOutput student_generate(const FlowStack& stack, const Tensor& z, const ConditioningSeq& c);

// The slow direction: recovers z from x one timestep at a time, running each
// flow's network once per timestep. Values only (nothing is recorded).
Tensor invert_flows(const FlowStack& stack, const Tensor& x, const ConditioningSeq& c);

}  // namespace pdistill
