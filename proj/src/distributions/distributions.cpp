#include "distributions/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "autodiff/ops.hpp"
#include "core/error.hpp"

namespace pdistill {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogisticParams::scale() const { return std::exp(log_s); }

LogisticParams LogisticParams::from_scale(double mu, double s) {
  require(s > 0.0, "logistic scale must be positive");
  return {mu, std::log(s)};
}

void MixtureOfLogistics::validate() const {
  require(!logits.empty(), "mixture needs at least one component");
  require(mus.size() == logits.size() && log_ss.size() == logits.size(),
          "mixture parameter vectors differ in length");
}

std::vector<double> MixtureOfLogistics::weights() const {
  validate();
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) total += (w[k] = std::exp(logits[k] - m));
  for (double& v : w) v /= total;
  return w;
}

double MixtureOfLogistics::mean() const {
  const auto w = weights();
  double out = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) out += w[k] * mus[k];
  return out;
}

std::size_t DiscretizationSpec::bins() const {
  require(bit_depth >= 1 && bit_depth <= 16, "bit depth must lie in [1, 16]");
  return std::size_t{1} << bit_depth;
}

double DiscretizationSpec::bin_width() const { return 2.0 / static_cast<double>(bins() - 1); }

double DiscretizationSpec::center(std::size_t index) const {
  require(index < bins(), "bin index out of range");
  return -1.0 + static_cast<double>(index) * bin_width();
}

std::size_t DiscretizationSpec::index_of(double x) const {
  const double pos = (x + 1.0) / bin_width();
  const double nearest = std::round(pos);
  if (!std::isfinite(x) || std::abs(pos - nearest) > 1e-6 || nearest < 0.0 ||
      nearest > static_cast<double>(bins() - 1)) {
    fail(ErrorCode::kInvalidArgument, "value " + std::to_string(x) + " is not a bin center of the " +
                                          std::to_string(bit_depth) + "-bit grid");
  }
  return static_cast<std::size_t>(nearest);
}

double DiscretizationSpec::quantize(double x) const {
  const double pos = std::clamp(std::round((x + 1.0) / bin_width()), 0.0, static_cast<double>(bins() - 1));
  return center(static_cast<std::size_t>(pos));
}

double logistic_log_density(double x, const LogisticParams& p) {
  if (!std::isfinite(x) || !std::isfinite(p.mu) || !std::isfinite(p.log_s)) {
    fail(ErrorCode::kNonFinite, "logistic_log_density: non-finite input");
  }
  const double u = (x - p.mu) * std::exp(-p.log_s);
  return -u - p.log_s - 2.0 * softplus(-u);
}

double logistic_sample(const LogisticParams& p, double u) {
  if (!(u > 0.0 && u < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "logistic_sample: u must lie in the open interval (0, 1)");
  }
  return p.mu + p.scale() * (std::log(u) - std::log1p(-u));
}

double logistic_entropy(const LogisticParams& p) { return p.log_s + 2.0; }

namespace {

// Log mass of [c - half, c + half] for a unit-shifted logistic, in terms of
// a = (c + half)/s and b = (c - half)/s. Uses
//   sigma(a) - sigma(b) = sigma(a) (1 - sigma(b)) (1 - e^{b - a}).
double log_interval_mass(double a, double b, bool lowest, bool highest) {
  if (lowest && highest) return 0.0;
  if (lowest) return -softplus(-a);
  if (highest) return -softplus(b);
  return -softplus(-a) - softplus(b) + std::log(-std::expm1(b - a));
}

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace

double mol_log_density(double x, const MixtureOfLogistics& m) {
  m.validate();
  const std::size_t k = m.components();
  std::vector<double> terms(k);
  const double norm = log_sum_exp(m.logits.data(), k);
  for (std::size_t i = 0; i < k; ++i) {
    terms[i] = m.logits[i] - norm + logistic_log_density(x, {m.mus[i], m.log_ss[i]});
  }
  return log_sum_exp(terms.data(), k);
}

double discretized_mol_log_prob(double x_bin_center, const MixtureOfLogistics& m,
                                const DiscretizationSpec& d) {
  m.validate();
  const std::size_t index = d.index_of(x_bin_center);
  const double x = d.center(index);
  const double half = 0.5 * d.bin_width();
  const bool lowest = index == 0;
  const bool highest = index == d.bins() - 1;
  const std::size_t k = m.components();
  std::vector<double> terms(k);
  const double norm = log_sum_exp(m.logits.data(), k);
  for (std::size_t i = 0; i < k; ++i) {
    const double inv_s = std::exp(-m.log_ss[i]);
    const double c = x - m.mus[i];
    terms[i] = m.logits[i] - norm + log_interval_mass((c + half) * inv_s, (c - half) * inv_s, lowest, highest);
  }
  return log_sum_exp(terms.data(), k);
}

double mol_sample(const MixtureOfLogistics& m, CounterRng& rng, const DiscretizationSpec* domain) {
  const auto w = m.weights();
  const double u_component = rng.uniform_open();
  const double u_value = rng.uniform_open();
  std::size_t chosen = w.size() - 1;
  double cdf = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    cdf += w[k];
    if (u_component < cdf) {
      chosen = k;
      break;
    }
  }
  double x = logistic_sample({m.mus[chosen], m.log_ss[chosen]}, u_value);
  if (domain) x = std::clamp(x, -1.0, 1.0);
  return x;
}

MixtureOfLogistics MixtureTensors::at(std::size_t b, std::size_t t) const {
  const std::size_t k = components(), len = length();
  MixtureOfLogistics m;
  m.logits.resize(k);
  m.mus.resize(k);
  m.log_ss.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t idx = (b * k + i) * len + t;
    m.logits[i] = logits[idx];
    m.mus[i] = mus[idx];
    m.log_ss[i] = log_ss[idx];
  }
  return m;
}

namespace ops {
namespace {

void check_mixture(const MixtureTensors& m, const char* op) {
  for (const Tensor* t : {&m.logits, &m.mus, &m.log_ss}) {
    if (!t->defined() || t->rank() != 3) {
      fail(ErrorCode::kShapeMismatch, std::string(op) + ": mixture tensors must be [B, K, T]");
    }
  }
  if (m.mus.shape() != m.logits.shape() || m.log_ss.shape() != m.logits.shape()) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": mixture tensors differ in shape");
  }
}

// Log-softmax of the logits over the component axis, [B, K, T].
std::vector<double> log_weights(const std::vector<double>& logits, std::size_t batch, std::size_t k,
                                std::size_t len) {
  std::vector<double> out(logits.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < k; ++i) m = std::max(m, logits[(b * k + i) * len + t]);
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += std::exp(logits[(b * k + i) * len + t] - m);
      const double norm = m + std::log(s);
      for (std::size_t i = 0; i < k; ++i) out[(b * k + i) * len + t] = logits[(b * k + i) * len + t] - norm;
    }
  }
  return out;
}

}  // namespace

Tensor mol_log_density(const Tensor& samples, const MixtureTensors& mixture) {
  check_mixture(mixture, "mol_log_density");
  if (samples.rank() != 3 || samples.dim(0) != mixture.batch() || samples.dim(2) != mixture.length()) {
    fail(ErrorCode::kShapeMismatch, "mol_log_density: samples " + shape_string(samples.shape()) +
                                        " do not match mixture " + shape_string(mixture.logits.shape()));
  }
  const std::size_t batch = mixture.batch(), k = mixture.components(), len = mixture.length();
  const std::size_t draws = samples.dim(1);
  const auto lw = log_weights(mixture.logits.node()->value, batch, k, len);
  const auto& mu = mixture.mus.node()->value;
  const auto& ls = mixture.log_ss.node()->value;
  const auto& xs = samples.node()->value;

  std::vector<double> out(batch * draws * len);
  std::vector<double> terms(k);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t m = 0; m < draws; ++m) {
      for (std::size_t t = 0; t < len; ++t) {
        const double x = xs[(b * draws + m) * len + t];
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t p = (b * k + i) * len + t;
          const double u = (x - mu[p]) * std::exp(-ls[p]);
          terms[i] = lw[p] - u - ls[p] - 2.0 * pdistill::softplus(-u);
        }
        out[(b * draws + m) * len + t] = log_sum_exp(terms.data(), k);
      }
    }
  }

  const bool track = internal::should_track({&samples, &mixture.logits, &mixture.mus, &mixture.log_ss});
  auto nx = samples.node(), nl = mixture.logits.node(), nm = mixture.mus.node(), ns = mixture.log_ss.node();
  return internal::make_result(
      Shape{batch, draws, len}, std::move(out), "mol_log_density", track,
      [nx, nl, nm, ns, batch, draws, k, len](detail::Node& self) {
        const auto lw = log_weights(nl->value, batch, k, len);
        double* gx = nx->requires_grad ? nx->ensure_grad().data() : nullptr;
        double* gl = nl->requires_grad ? nl->ensure_grad().data() : nullptr;
        double* gm = nm->requires_grad ? nm->ensure_grad().data() : nullptr;
        double* gs = ns->requires_grad ? ns->ensure_grad().data() : nullptr;
        const auto& mu = nm->value;
        const auto& ls = ns->value;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t m = 0; m < draws; ++m) {
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t o = (b * draws + m) * len + t;
              const double g = self.grad[o];
              if (g == 0.0) continue;
              const double x = nx->value[o];
              const double total = self.value[o];
              for (std::size_t i = 0; i < k; ++i) {
                const std::size_t p = (b * k + i) * len + t;
                const double inv_s = std::exp(-ls[p]);
                const double u = (x - mu[p]) * inv_s;
                const double log_comp = -u - ls[p] - 2.0 * pdistill::softplus(-u);
                const double resp = std::exp(lw[p] + log_comp - total);
                // d log_comp / du = 1 - 2 pdistill::sigmoid(u)
                const double dldu = 1.0 - 2.0 * pdistill::sigmoid(u);
                const double gr = g * resp;
                if (gx) gx[o] += gr * dldu * inv_s;
                if (gm) gm[p] -= gr * dldu * inv_s;
                if (gs) gs[p] += gr * (-1.0 - u * dldu);
                if (gl) gl[p] += g * (resp - std::exp(lw[p]));
              }
            }
          }
        }
      });
}

Tensor discretized_mol_log_prob(const Tensor& x, const MixtureTensors& mixture,
                                const DiscretizationSpec& spec) {
  check_mixture(mixture, "discretized_mol_log_prob");
  if (x.rank() != 3 || x.dim(0) != mixture.batch() || x.dim(1) != 1 || x.dim(2) != mixture.length()) {
    fail(ErrorCode::kShapeMismatch, "discretized_mol_log_prob: x " + shape_string(x.shape()) +
                                        " does not match mixture " + shape_string(mixture.logits.shape()));
  }
  const std::size_t batch = mixture.batch(), k = mixture.components(), len = mixture.length();
  const std::size_t last_bin = spec.bins() - 1;
  const double half = 0.5 * spec.bin_width();
  std::vector<std::size_t> bin(batch * len);
  for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = spec.index_of(x[i]);

  const auto lw = log_weights(mixture.logits.node()->value, batch, k, len);
  const auto& mu = mixture.mus.node()->value;
  const auto& ls = mixture.log_ss.node()->value;
  std::vector<double> out(batch * len);
  std::vector<double> terms(k);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t idx = bin[b * len + t];
      const double xc = spec.center(idx);
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t p = (b * k + i) * len + t;
        const double inv_s = std::exp(-ls[p]);
        const double c = xc - mu[p];
        terms[i] = lw[p] + log_interval_mass((c + half) * inv_s, (c - half) * inv_s, idx == 0, idx == last_bin);
      }
      out[b * len + t] = log_sum_exp(terms.data(), k);
    }
  }

  const bool track = internal::should_track({&mixture.logits, &mixture.mus, &mixture.log_ss});
  auto nl = mixture.logits.node(), nm = mixture.mus.node(), ns = mixture.log_ss.node();
  return internal::make_result(
      Shape{batch, 1, len}, std::move(out), "discretized_mol_log_prob", track,
      [nl, nm, ns, bin = std::move(bin), spec, batch, k, len, last_bin, half](detail::Node& self) {
        const auto lw = log_weights(nl->value, batch, k, len);
        double* gl = nl->requires_grad ? nl->ensure_grad().data() : nullptr;
        double* gm = nm->requires_grad ? nm->ensure_grad().data() : nullptr;
        double* gs = ns->requires_grad ? ns->ensure_grad().data() : nullptr;
        const auto& mu = nm->value;
        const auto& ls = ns->value;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < len; ++t) {
            const std::size_t o = b * len + t;
            const double g = self.grad[o];
            if (g == 0.0) continue;
            const std::size_t idx = bin[o];
            const bool lowest = idx == 0, highest = idx == last_bin;
            const double xc = spec.center(idx);
            for (std::size_t i = 0; i < k; ++i) {
              const std::size_t p = (b * k + i) * len + t;
              const double inv_s = std::exp(-ls[p]);
              const double c = xc - mu[p];
              const double a = (c + half) * inv_s;
              const double bb = (c - half) * inv_s;
              const double log_comp = log_interval_mass(a, bb, lowest, highest);
              const double resp = std::exp(lw[p] + log_comp - self.value[o]);
              // Partials of log_comp with respect to a, b and delta = a - b.
              double da = 0.0, db = 0.0, dd = 0.0;
              if (!(lowest && highest)) {
                if (!highest) da = pdistill::sigmoid(-a);
                if (!lowest) db = -pdistill::sigmoid(bb);
                if (!lowest && !highest) dd = 1.0 / std::expm1(a - bb);
              }
              const double gr = g * resp;
              // a and b move with -1/s under mu; a, b and delta scale by -1 under log s.
              if (gm) gm[p] += gr * (-(da + db) * inv_s);
              if (gs) gs[p] += gr * (-a * da - bb * db - (a - bb) * dd);
              if (gl) gl[p] += g * (resp - std::exp(lw[p]));
            }
          }
        }
      });
}

}  // namespace ops
}  // namespace pdistill
