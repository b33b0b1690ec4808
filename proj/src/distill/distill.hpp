#pragma once

#include <cstddef>
#include <string>

#include "autodiff/adam.hpp"
#include "distill/classifier.hpp"
#include "distill/losses.hpp"
#include "distill/spectral.hpp"

namespace pdistill {

struct DistillConfig {
  std::size_t inner_samples = 16;
  double lambda_power = 1.0;
  double lambda_perceptual = 1.0;
  // Contrastive weight; 0 turns the contrastive term off.
  double gamma = 0.3;
  PerceptualMode perceptual_mode = PerceptualMode::kGram;
  SpectrogramSpec stft;

  void validate() const;
  bool uses_power() const { return lambda_power > 0.0; }
  bool uses_perceptual() const { return lambda_perceptual > 0.0; }
  bool uses_contrastive() const { return gamma > 0.0; }

  // kl, kl_power, kl_power_perceptual, kl_power_perceptual_contrastive.
  static DistillConfig preset(const std::string& name);
  void store(KeyValues& kv, const std::string& prefix) const;
  static DistillConfig load(const KeyValues& kv, const std::string& prefix);
  static DistillConfig load(const KeyValues& kv, const std::string& prefix, const DistillConfig& defaults);
};

// Per-timestep nats for kl, cross_entropy, entropy and contrastive.
struct LossBreakdown {
  double kl = 0.0;
  double cross_entropy = 0.0;
  double entropy = 0.0;
  double power = 0.0;
  double perceptual = 0.0;
  double contrastive = 0.0;
  double total = 0.0;

  std::string describe() const;
};

struct DistillBatch {
  ConditioningSeq c;
  Tensor y_ref;  // [B, 1, T] conditioning-matched training clips
  // Used only when there are no reference clips.
  std::size_t rows = 0;
  std::size_t length = 0;

  std::size_t batch_size() const { return y_ref.defined() ? y_ref.dim(0) : (c.empty() ? rows : c.batch()); }
  std::size_t samples() const { return y_ref.defined() ? y_ref.dim(2) : length; }
};

struct DistillObjective {
  Tensor total;
  LossBreakdown breakdown;
  StudentOutput student;
};

// total = kl + lambda_power * power + lambda_perceptual * perceptual, with
// kl replaced by kl(c1) - gamma * kl(c2) when gamma > 0. c2 is the batch's
// conditioning rolled by one row.
DistillObjective distill_objective(const FlowStack& stack, const TeacherDensity& teacher,
                                   const PhoneClassifier* classifier, const DistillBatch& batch,
                                   const DistillConfig& cfg, const Tensor& z, CounterRng& inner_rng);

// One optimisation step of the student. Throws kNonFinite without touching
// the parameters when the total is not finite.
LossBreakdown distill_step(FlowStack& stack, const TeacherDensity& teacher, const PhoneClassifier* classifier,
                           const DistillBatch& batch, const DistillConfig& cfg, Adam& optimizer,
                           CounterRng& latent_rng, CounterRng& inner_rng);

// Rows rolled by one: row b takes row (b + 1) mod B. When that changes
// nothing, frames are rolled one step in time instead.
ConditioningSeq rolled_conditioning(const ConditioningSeq& c);

}  // namespace pdistill
