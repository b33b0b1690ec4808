#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "core/config.hpp"

namespace pdistill {

struct ClassifierConfig {
  std::size_t num_layers = 5;  // dilations 1, 2, 4, ...
  std::size_t filter_size = 3;
  std::size_t channels = 16;
  std::size_t num_phones = 8;
  std::size_t frame_divisor = 64;

  void validate() const;
  std::size_t receptive_field() const;

  void store(KeyValues& kv, const std::string& prefix) const;
  static ClassifierConfig load(const KeyValues& kv, const std::string& prefix);
};

// Small causal gated conv net labelling every frame with a phone id. Its
// residual-layer outputs double as perceptual features.
class PhoneClassifier {
 public:
  PhoneClassifier(const ClassifierConfig& config, std::uint64_t seed);

  const ClassifierConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  bool trained() const { return trained_; }
  // Marks the net as trained and freezes its weights.
  void mark_trained();
  void set_trained_flag(bool trained);

  // Residual outputs of every layer, [B, channels, T - receptive_field + 1],
  // keeping only positions whose receptive field lies inside the signal.
  std::vector<Tensor> features(const Tensor& x) const;
  // [B, num_phones, T / frame_divisor]: per-sample logits averaged over the
  // second half of each frame.
  Tensor frame_logits(const Tensor& x) const;
  // Mean cross-entropy against labels [B * frames] (row-major).
  Tensor loss(const Tensor& x, const std::vector<std::size_t>& labels) const;
  std::vector<std::size_t> predict(const Tensor& x) const;

 private:
  std::vector<Tensor> residual_outputs(const Tensor& x) const;

  ClassifierConfig config_;
  ParameterSet params_;
  bool trained_ = false;
};

enum class PerceptualMode { kFeature, kGram };

PerceptualMode parse_perceptual_mode(const std::string& name);
std::string perceptual_mode_name(PerceptualMode mode);

// feature: sum over layers of the squared feature-map distance per timestep;
// gram: sum over layers of the squared distance between time-averaged
// channel Gram matrices. Both averaged over the batch. Throws kClassifierUntrained unless
// the classifier has been trained.
Tensor perceptual_loss(const Tensor& x_gen, const Tensor& y_ref, const PhoneClassifier& classifier,
                       PerceptualMode mode);

}  // namespace pdistill
