#include "distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "autodiff/ops.hpp"
#include "core/error.hpp"

namespace pdistill {

void DistillConfig::validate() const {
  require(inner_samples >= 1, "inner_samples must be >= 1");
  require(lambda_power >= 0.0 && lambda_perceptual >= 0.0, "loss weights must be non-negative");
  require(gamma >= 0.0, "gamma must be non-negative");
  stft.validate();
}

DistillConfig DistillConfig::preset(const std::string& name) {
  DistillConfig c;
  if (name == "kl") {
    c.lambda_power = 0.0;
    c.lambda_perceptual = 0.0;
    c.gamma = 0.0;
  } else if (name == "kl_power") {
    c.lambda_perceptual = 0.0;
    c.gamma = 0.0;
  } else if (name == "kl_power_perceptual") {
    c.gamma = 0.0;
  } else if (name != "kl_power_perceptual_contrastive") {
    fail(ErrorCode::kInvalidArgument, "unknown loss preset '" + name + "'");
  }
  return c;
}

void DistillConfig::store(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "inner_samples", std::to_string(inner_samples));
  kv.set(prefix + "lambda_power", format_double(lambda_power));
  kv.set(prefix + "lambda_perceptual", format_double(lambda_perceptual));
  kv.set(prefix + "gamma", format_double(gamma));
  kv.set(prefix + "perceptual_mode", perceptual_mode_name(perceptual_mode));
  stft.store(kv, "stft.");
}

DistillConfig DistillConfig::load(const KeyValues& kv, const std::string& prefix) {
  return load(kv, prefix, preset(kv.get_string(prefix + "preset", "kl_power_perceptual_contrastive")));
}

DistillConfig DistillConfig::load(const KeyValues& kv, const std::string& prefix, const DistillConfig& defaults) {
  DistillConfig c = defaults;
  c.inner_samples = kv.get_size(prefix + "inner_samples", c.inner_samples);
  c.lambda_power = kv.get_double(prefix + "lambda_power", c.lambda_power);
  c.lambda_perceptual = kv.get_double(prefix + "lambda_perceptual", c.lambda_perceptual);
  c.gamma = kv.get_double(prefix + "gamma", c.gamma);
  c.perceptual_mode = parse_perceptual_mode(kv.get_string(prefix + "perceptual_mode", perceptual_mode_name(c.perceptual_mode)));
  c.stft = SpectrogramSpec::load(kv, "stft.");
  c.validate();
  return c;
}

std::string LossBreakdown::describe() const {
  std::ostringstream out;
  out << "kl=" << kl << " ce=" << cross_entropy << " h=" << entropy << " power=" << power
      << " perceptual=" << perceptual << " contrastive=" << contrastive << " total=" << total;
  return out.str();
}

ConditioningSeq rolled_conditioning(const ConditioningSeq& c) {
  std::vector<std::size_t> order(c.batch());
  for (std::size_t b = 0; b < order.size(); ++b) order[b] = (b + 1) % order.size();
  ConditioningSeq out = c.permuted(order);
  if (!std::equal(out.frames.data().begin(), out.frames.data().end(), c.frames.data().begin())) return out;
  // All rows agree, so shift each row's frames one step later in time instead.
  const std::size_t rows = c.batch() * c.channels(), frames = c.num_frames();
  std::vector<double> shifted(c.frames.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < frames; ++f) shifted[r * frames + (f + 1) % frames] = c.frames[r * frames + f];
  out.frames = Tensor(c.frames.shape(), std::move(shifted));
  return out;
}

DistillObjective distill_objective(const FlowStack& stack, const TeacherDensity& teacher,
                                   const PhoneClassifier* classifier, const DistillBatch& batch,
                                   const DistillConfig& cfg, const Tensor& z, CounterRng& inner_rng) {
  cfg.validate();
  DistillObjective out;
  out.student = student_generate(stack, z, batch.c);
  const StudentOutput& s = out.student;
  const double inv_len = 1.0 / static_cast<double>(z.dim(2));

  KlTerms kl;
  Tensor contrastive;
  if (cfg.uses_contrastive()) {
    if (batch.c.empty() || batch.c.batch() < 2) {
      fail(ErrorCode::kInvalidArgument, "contrastive loss needs conditioning and a batch of at least 2");
    }
    const ContrastiveTerms terms = contrastive_loss(s, teacher, batch.c, rolled_conditioning(batch.c), cfg.gamma,
                                                    cfg.inner_samples, inner_rng);
    kl = terms.matched;
    contrastive = ops::scale(terms.value, inv_len);
  } else {
    kl = kl_loss(s, teacher, batch.c, cfg.inner_samples, inner_rng);
  }
  const Tensor ce_t = ops::scale(kl.cross_entropy, inv_len);
  const Tensor h_t = ops::scale(kl.entropy, inv_len);
  const Tensor kl_t = ops::sub(ce_t, h_t);
  LossBreakdown& br = out.breakdown;
  br.cross_entropy = ce_t.item();
  br.entropy = h_t.item();
  br.kl = kl_t.item();

  Tensor total = contrastive.defined() ? contrastive : kl_t;
  if (contrastive.defined()) br.contrastive = contrastive.item();
  if (cfg.uses_power()) {
    if (!batch.y_ref.defined()) fail(ErrorCode::kInvalidArgument, "power loss needs reference clips");
    const Tensor power = power_loss(s.x, batch.y_ref, cfg.stft);
    br.power = power.item();
    total = ops::add(total, ops::scale(power, cfg.lambda_power));
  }
  if (cfg.uses_perceptual()) {
    if (!classifier) fail(ErrorCode::kClassifierUntrained, "perceptual loss needs a classifier");
    if (!batch.y_ref.defined()) fail(ErrorCode::kInvalidArgument, "perceptual loss needs reference clips");
    const Tensor perceptual = perceptual_loss(s.x, batch.y_ref, *classifier, cfg.perceptual_mode);
    br.perceptual = perceptual.item();
    total = ops::add(total, ops::scale(perceptual, cfg.lambda_perceptual));
  }
  br.total = total.item();
  out.total = total;
  return out;
}

LossBreakdown distill_step(FlowStack& stack, const TeacherDensity& teacher, const PhoneClassifier* classifier,
                           const DistillBatch& batch, const DistillConfig& cfg, Adam& optimizer,
                           CounterRng& latent_rng, CounterRng& inner_rng) {
  const std::size_t rows = batch.batch_size(), len = batch.samples();
  require(rows >= 1 && len >= 1, "empty distillation batch");
  const Tensor z = draw_latent(rows, len, latent_rng);
  Tape tape;
  Tape::Scope scope(tape);
  stack.parameters().zero_grad();
  DistillObjective obj = distill_objective(stack, teacher, classifier, batch, cfg, z, inner_rng);
  if (!std::isfinite(obj.breakdown.total)) {
    fail(ErrorCode::kNonFinite, "non-finite distillation loss: " + obj.breakdown.describe());
  }
  tape.backward(obj.total);
  optimizer.step();
  return obj.breakdown;
}

}  // namespace pdistill
