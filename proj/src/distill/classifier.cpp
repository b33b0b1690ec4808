#include "distill/classifier.hpp"

#include <algorithm>

#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "teacher/wavenet_layers.hpp"

namespace pdistill {

void ClassifierConfig::validate() const {
  require(num_layers >= 1 && num_layers <= 16, "classifier num_layers must lie in [1, 16]");
  require(filter_size >= 1, "classifier filter_size must be >= 1");
  require(channels >= 1, "classifier channels must be positive");
  require(num_phones >= 2, "classifier needs at least two phones");
  require(frame_divisor >= 2, "classifier frame_divisor must be >= 2");
}

std::size_t ClassifierConfig::receptive_field() const {
  return 1 + (filter_size - 1) * ((std::size_t{1} << num_layers) - 1);
}

void ClassifierConfig::store(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "num_layers", std::to_string(num_layers));
  kv.set(prefix + "filter_size", std::to_string(filter_size));
  kv.set(prefix + "channels", std::to_string(channels));
  kv.set(prefix + "num_phones", std::to_string(num_phones));
  kv.set(prefix + "frame_divisor", std::to_string(frame_divisor));
}

ClassifierConfig ClassifierConfig::load(const KeyValues& kv, const std::string& prefix) {
  ClassifierConfig c;
  c.num_layers = kv.get_size(prefix + "num_layers", c.num_layers);
  c.filter_size = kv.get_size(prefix + "filter_size", c.filter_size);
  c.channels = kv.get_size(prefix + "channels", c.channels);
  c.num_phones = kv.get_size(prefix + "num_phones", c.num_phones);
  c.frame_divisor = kv.get_size(prefix + "frame_divisor", c.frame_divisor);
  c.validate();
  return c;
}

PhoneClassifier::PhoneClassifier(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  wavenet::add_conv(params_, "cls.input", c, 1, 1, seed, 1.0);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    wavenet::add_gated_layer(params_, "cls.layers." + std::to_string(l), c, 2 * c, 0, 0, config_.filter_size,
                             seed);
  }
  wavenet::add_conv(params_, "cls.out", config_.num_phones, c, 1, seed, 1.0);
}

void PhoneClassifier::mark_trained() {
  trained_ = true;
  params_.set_requires_grad(false);
}

void PhoneClassifier::set_trained_flag(bool trained) {
  if (trained) {
    mark_trained();
  } else {
    trained_ = false;
    params_.set_requires_grad(true);
  }
}

std::vector<Tensor> PhoneClassifier::residual_outputs(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(1) != 1) {
    fail(ErrorCode::kShapeMismatch, "classifier input must be [B, 1, T], got " + shape_string(x.shape()));
  }
  std::vector<Tensor> out;
  Tensor h = wavenet::conv(params_, "cls.input", x);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    h = wavenet::gated_layer(params_, "cls.layers." + std::to_string(l), h, Tensor{}, std::size_t{1} << l).residual;
    out.push_back(h);
  }
  return out;
}

std::vector<Tensor> PhoneClassifier::features(const Tensor& x) const {
  const std::size_t rf = config_.receptive_field();
  if (x.rank() == 3 && x.dim(2) < rf) {
    fail(ErrorCode::kInvalidArgument, "signal shorter than the classifier receptive field");
  }
  std::vector<Tensor> maps = residual_outputs(x);
  for (Tensor& m : maps) m = ops::slice_time(m, rf - 1, m.dim(2));
  return maps;
}

Tensor PhoneClassifier::frame_logits(const Tensor& x) const {
  const std::size_t div = config_.frame_divisor;
  if (x.rank() != 3 || x.dim(2) < div || x.dim(2) % div != 0) {
    fail(ErrorCode::kShapeMismatch, "classifier input length must be a positive multiple of " +
                                        std::to_string(div) + ", got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), frames = x.dim(2) / div, p = config_.num_phones;
  const Tensor logits = wavenet::conv(params_, "cls.out", ops::relu(residual_outputs(x).back()));
  // [B, P, frames, div] -> second half of each frame -> mean.
  const Tensor grouped = ops::reshape(logits, Shape{batch * p * frames, div});
  const Tensor tail = ops::slice_time(grouped, div / 2, div);
  return ops::reshape(ops::mean_axis(tail, 1), Shape{batch, p, frames});
}

Tensor PhoneClassifier::loss(const Tensor& x, const std::vector<std::size_t>& labels) const {
  const Tensor logits = frame_logits(x);
  const std::size_t batch = logits.dim(0), p = logits.dim(1), frames = logits.dim(2);
  require(labels.size() == batch * frames, "label count does not match the number of frames");
  // One-hot selection as a constant mask keeps everything on existing ops.
  std::vector<double> mask(batch * p * frames, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t label = labels[b * frames + f];
      require(label < p, "phone label out of range");
      mask[(b * p + label) * frames + f] = 1.0;
    }
  const Tensor picked = ops::sum(ops::mul(logits, Tensor(logits.shape(), std::move(mask))));
  const Tensor norm = ops::sum(ops::logsumexp(logits, 1));
  return ops::scale(ops::sub(norm, picked), 1.0 / static_cast<double>(batch * frames));
}

std::vector<std::size_t> PhoneClassifier::predict(const Tensor& x) const {
  const Tensor logits = frame_logits(x.detach());
  const std::size_t batch = logits.dim(0), p = logits.dim(1), frames = logits.dim(2);
  std::vector<std::size_t> out(batch * frames);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < frames; ++f) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < p; ++k)
        if (logits[(b * p + k) * frames + f] > logits[(b * p + best) * frames + f]) best = k;
      out[b * frames + f] = best;
    }
  return out;
}

PerceptualMode parse_perceptual_mode(const std::string& name) {
  if (name == "gram") return PerceptualMode::kGram;
  if (name == "feature") return PerceptualMode::kFeature;
  fail(ErrorCode::kInvalidArgument, "unknown perceptual mode '" + name + "'");
}

std::string perceptual_mode_name(PerceptualMode mode) {
  return mode == PerceptualMode::kGram ? "gram" : "feature";
}

Tensor perceptual_loss(const Tensor& x_gen, const Tensor& y_ref, const PhoneClassifier& classifier,
                       PerceptualMode mode) {
  if (!classifier.trained()) fail(ErrorCode::kClassifierUntrained, "perceptual loss needs a trained classifier");
  if (x_gen.shape() != y_ref.shape()) {
    fail(ErrorCode::kShapeMismatch, "perceptual loss needs equal shapes, got " + shape_string(x_gen.shape()) +
                                        " and " + shape_string(y_ref.shape()));
  }
  const auto gen = classifier.features(x_gen);
  const auto ref = classifier.features(y_ref);
  const double batch = static_cast<double>(x_gen.dim(0));
  Tensor total;
  for (std::size_t l = 0; l < gen.size(); ++l) {
    Tensor term;
    if (mode == PerceptualMode::kGram) {
      // Time-averaged Gram matrices, so the scale does not grow with T.
      const double inv_t = 1.0 / static_cast<double>(gen[l].dim(2));
      const Tensor g = ops::scale(ops::gram(gen[l]), inv_t);
      const Tensor r = ops::scale(ops::gram(ref[l].detach()), inv_t);
      term = ops::scale(ops::sum(ops::square(ops::sub(g, r))), 1.0 / batch);
    } else {
      const double steps = static_cast<double>(gen[l].dim(2));
      term = ops::scale(ops::sum(ops::square(ops::sub(gen[l], ref[l].detach()))), 1.0 / (batch * steps));
    }
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

}  // namespace pdistill
