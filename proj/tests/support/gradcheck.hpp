#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "autodiff/tensor.hpp"
#include "core/rng.hpp"

namespace pdistill::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]" of the worst coordinate
  std::size_t probes = 0;
};

// |a - n| / max(|a|, |n|, floor)
double rel_error(double analytic, double numeric, double floor = 1e-8);

// Compares tape gradients of `loss` against central differences at `probes`
// randomly chosen parameter coordinates. `loss` must rebuild its graph on
// every call and be a deterministic function of the parameter values.
GradCheck check_parameter_gradients(ParameterSet& params, const std::function<Tensor()>& loss,
                                    std::size_t probes, CounterRng& rng, double h = 1e-5,
                                    double floor = 1e-8);

// Same for the coordinates of a single input tensor (a leaf that requires grad).
GradCheck check_input_gradients(Tensor& input, const std::function<Tensor()>& loss,
                                std::size_t probes, CounterRng& rng, double h = 1e-5,
                                double floor = 1e-8);

}  // namespace pdistill::testing
