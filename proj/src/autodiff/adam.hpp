#pragma once

#include <cstdint>
#include <vector>

#include "autodiff/tensor.hpp"

namespace pdistill {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescales the global gradient norm down to this value; 0 disables.
  double clip_norm = 0.0;
};

// Adam over every parameter of a ParameterSet that requires a gradient.
// Reads the gradients accumulated on the parameter leaves, then clears them.
class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options);

  // Returns the pre-clipping global gradient norm.
  double step();
  std::uint64_t steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  ParameterSet& params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace pdistill
