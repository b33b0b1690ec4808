#include "oracles.hpp"

namespace pdistill::testing {

std::vector<double> naive_ancestral_sample(const TeacherNet& net, const ConditioningSeq& c,
                                           std::size_t length, CounterRng& rng, bool quantize) {
  const DiscretizationSpec domain = net.config().discretization();
  std::vector<double> x;
  for (std::size_t t = 0; t < length; ++t) {
    std::vector<double> prefix = x;
    prefix.push_back(0.0);  // never seen by position t after the shift
    const Tensor input(Shape{1, 1, t + 1}, prefix);
    const MixtureTensors mix = net.forward(input, c);
    double v = mol_sample(mix.at(0, t), rng, &domain);
    if (quantize) v = domain.quantize(v);
    x.push_back(v);
  }
  return x;
}

std::vector<double> sequential_student(const FlowStack& stack, const Tensor& z, const ConditioningSeq& c) {
  const std::size_t batch = z.dim(0), len = z.dim(2);
  std::vector<double> out(batch * len);
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> prefix(batch * (t + 1));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t u = 0; u <= t; ++u) prefix[b * (t + 1) + u] = z[b * len + u];
    Tensor x(Shape{batch, 1, t + 1}, prefix);
    // Apply the flows one after another on this prefix only.
    for (std::size_t i = 0; i < stack.config().num_flows(); ++i) x = flow_apply(stack, i, x, c).x;
    for (std::size_t b = 0; b < batch; ++b) out[b * len + t] = x[b * (t + 1) + t];
  }
  return out;
}

}  // namespace pdistill::testing
