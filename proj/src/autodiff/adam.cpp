#include "autodiff/adam.hpp"

#include <cmath>

namespace pdistill {

Adam::Adam(ParameterSet& params, AdamOptions options) : params_(params), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (const double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  double factor = 1.0;
  if (options_.clip_norm > 0.0 && norm > options_.clip_norm) factor = options_.clip_norm / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  std::size_t idx = 0;
  for (auto& p : params_) {
    auto& m = m_[idx];
    auto& v = v_[idx];
    ++idx;
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    const auto grad = p.tensor.grad();
    auto value = p.tensor.mutable_data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * factor;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      value[i] -= options_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
    p.tensor.zero_grad();
  }
  return norm;
}

}  // namespace pdistill
