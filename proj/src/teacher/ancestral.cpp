#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "core/error.hpp"
#include "teacher/teacher.hpp"

namespace pdistill {
namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Tap k of a [Cout, Cin, F] weight as a Cout x Cin matrix.
Matrix tap_matrix(const Tensor& w, std::size_t k) {
  const std::size_t cout = w.dim(0), cin = w.dim(1), taps = w.dim(2);
  Matrix m(cout, cin);
  const auto d = w.data();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i) m(o, i) = d[(o * cin + i) * taps + k];
  return m;
}

Vector bias_vector(const ParameterSet& params, const std::string& name, std::size_t n) {
  if (!params.contains(name)) return Vector::Zero(n);
  const auto d = params.at(name).data();
  return Eigen::Map<const Vector>(d.data(), d.size());
}

struct CachedLayer {
  std::size_t dilation = 1;
  std::vector<Matrix> taps;  // taps.back() multiplies the current input
  Vector dil_bias;
  Matrix cond;               // gate x frames, V * c at frame rate
  Matrix res, skip;
  Vector res_bias, skip_bias;
  // Last (F-1)*dilation layer inputs, one column per timestep.
  Matrix ring;
};

}  // namespace

std::vector<double> ancestral_sample(const TeacherNet& net, const ConditioningSeq& c,
                                     std::size_t length, CounterRng& rng) {
  require(length >= 1, "ancestral_sample needs length >= 1");
  const TeacherConfig& cfg = net.config();
  const ParameterSet& params = net.parameters();
  check_conditioning(c, 1, length, cfg.conditioning_channels);
  const std::size_t r = cfg.residual_channels, g = cfg.gate_channels, half = g / 2;
  const std::size_t s = cfg.skip_channels, k = cfg.num_mixtures, f = cfg.filter_size;

  Matrix frames;
  if (cfg.conditioning_channels > 0) {
    const auto d = c.frames.data();
    frames = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        d.data(), c.channels(), c.num_frames());
  }

  const Vector w_in = tap_matrix(params.at("input.w"), 0).col(0);
  const Vector b_in = bias_vector(params, "input.b", r);
  std::vector<CachedLayer> layers(cfg.num_layers());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l);
    CachedLayer& L = layers[l];
    L.dilation = cfg.dilation(l);
    const Tensor& wd = params.at(p + ".dil.w");
    for (std::size_t tap = 0; tap < f; ++tap) L.taps.push_back(tap_matrix(wd, tap));
    L.dil_bias = bias_vector(params, p + ".dil.b", g);
    if (cfg.conditioning_channels > 0) L.cond = tap_matrix(params.at(p + ".cond.w"), 0) * frames;
    L.res = tap_matrix(params.at(p + ".res.w"), 0);
    L.res_bias = bias_vector(params, p + ".res.b", r);
    L.skip = tap_matrix(params.at(p + ".skip.w"), 0);
    L.skip_bias = bias_vector(params, p + ".skip.b", s);
    L.ring = Matrix::Zero(r, (f - 1) * L.dilation);
  }
  const Matrix head_hidden = tap_matrix(params.at("head.hidden.w"), 0);
  const Vector head_hidden_b = bias_vector(params, "head.hidden.b", s);
  const Matrix head_out = tap_matrix(params.at("head.out.w"), 0);
  const Vector head_out_b = bias_vector(params, "head.out.b", 3 * k);

  Vector h(r), pre(g), z(half), skip_sum(s), hidden(s), out(3 * k);
  MixtureOfLogistics mix;
  mix.logits.resize(k);
  mix.mus.resize(k);
  mix.log_ss.resize(k);
  const DiscretizationSpec domain = cfg.discretization();

  std::vector<double> x(length);
  double previous = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    h = w_in * previous + b_in;
    skip_sum.setZero();
    for (CachedLayer& L : layers) {
      pre = L.dil_bias;
      if (L.cond.size() > 0) pre += L.cond.col(static_cast<Eigen::Index>(t / c.frame_divisor));
      const std::size_t span = static_cast<std::size_t>(L.ring.cols());
      // Read the history taps before the current slot is overwritten.
      for (std::size_t tap = 0; tap + 1 < f; ++tap) {
        const std::size_t back = (f - 1 - tap) * L.dilation;
        if (back > t) continue;
        pre.noalias() += L.taps[tap] * L.ring.col(static_cast<Eigen::Index>((t - back) % span));
      }
      pre.noalias() += L.taps.back() * h;
      if (span > 0) L.ring.col(static_cast<Eigen::Index>(t % span)) = h;
      z = pre.head(half).array().tanh() * (1.0 / (1.0 + (-pre.tail(half).array()).exp()));
      skip_sum.noalias() += L.skip * z;
      skip_sum += L.skip_bias;
      h.noalias() += L.res * z;
      h += L.res_bias;
    }
    hidden = head_hidden * skip_sum.cwiseMax(0.0) + head_hidden_b;
    out = head_out * hidden.cwiseMax(0.0) + head_out_b;
    for (std::size_t i = 0; i < k; ++i) {
      mix.logits[i] = out(static_cast<Eigen::Index>(i));
      mix.mus[i] = out(static_cast<Eigen::Index>(k + i));
      mix.log_ss[i] = std::max(out(static_cast<Eigen::Index>(2 * k + i)), kMinLogScale);
    }
    x[t] = mol_sample(mix, rng, &domain);
    previous = x[t];
  }
  return x;
}

}  // namespace pdistill
