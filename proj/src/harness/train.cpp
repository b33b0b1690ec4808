#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>

#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "harness/commands.hpp"
#include "harness/metrics.hpp"

namespace pdistill {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void say(const RunSettings& run, const std::string& line) {
  if (run.log) *run.log << line << std::endl;
}

bool due(std::uint64_t step, std::uint64_t every, std::uint64_t last) {
  return step == last || (every > 0 && step % every == 0);
}

}  // namespace

TeacherTrainReport train_teacher(const RunSettings& run) {
  const KeyValues& kv = run.config;
  const CorpusSpec spec = run.corpus();
  const std::uint64_t steps = kv.get_size("train_teacher.steps", 20000);
  const std::size_t batch_size = kv.get_size("train_teacher.batch", 8);
  const std::size_t crop = kv.get_size("train_teacher.crop", spec.clip_length);
  const std::uint64_t every = kv.get_size("train_teacher.checkpoint_every", 1000);
  AdamOptions adam_opts;
  adam_opts.lr = kv.get_double("train_teacher.lr", 2e-4);
  adam_opts.clip_norm = kv.get_double("train_teacher.clip_norm", 0.0);
  require(steps >= 1, "train_teacher.steps must be >= 1");

  const std::vector<Clip> train = training_clips(spec);
  TeacherNet net(run.teacher(), run.seed);
  Adam adam(net.parameters(), adam_opts);
  TeacherTrainReport report;
  report.checkpoint = run.teacher_checkpoint();
  report.metrics = run.out / "teacher_metrics.csv";
  MetricsWriter metrics(report.metrics, kTeacherColumns);
  say(run, "train-teacher: receptive field " + std::to_string(receptive_field(net.config())) + ", " +
               std::to_string(net.parameters().scalar_count()) + " parameters");

  for (std::uint64_t step = 1; step <= steps; ++step) {
    const auto start = Clock::now();
    CounterRng batch_rng(run.seed, stream_id(StreamPurpose::kBatch, step));
    const Batch batch = random_batch(spec, train, batch_size, crop, batch_rng);
    double nll = 0.0;
    {
      Tape tape;
      Tape::Scope scope(tape);
      const Tensor loss = net.nll(batch.x, batch.c);
      nll = loss.item();
      if (!std::isfinite(nll)) {
        fail(ErrorCode::kNonFinite, "non-finite teacher loss at step " + std::to_string(step) +
                                        "; last good checkpoint kept at " + report.checkpoint.string());
      }
      tape.backward(loss);
    }
    adam.step();
    if (step == 1) report.initial_nll = nll;
    report.final_nll = nll;
    metrics.row(step, {nll}, ms_since(start));
    if (due(step, every, steps)) {
      save_checkpoint(report.checkpoint, teacher_checkpoint(net, step, {run.seed, stream_id(StreamPurpose::kBatch, step + 1), 0}));
      say(run, "step " + std::to_string(step) + " nll " + format_double(nll));
    }
  }
  report.steps = steps;
  const std::vector<Clip> held = heldout_clips(spec);
  if (!held.empty()) {
    const Batch hb = whole_clips(spec, held);
    report.heldout_nll = net.nll(hb.x, hb.c).item();
  }
  say(run, "train-teacher: final nll " + format_double(report.final_nll) + ", held-out " +
               format_double(report.heldout_nll));
  return report;
}

double frame_accuracy(const PhoneClassifier& cls, const Batch& batch) {
  const std::vector<std::size_t> predicted = cls.predict(batch.x);
  require(predicted.size() == batch.labels.size(), "prediction count does not match the labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == batch.labels[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

ClassifierReport train_classifier(const RunSettings& run) {
  const KeyValues& kv = run.config;
  const CorpusSpec spec = run.corpus();
  const std::uint64_t steps = kv.get_size("train_classifier.steps", 1500);
  const std::size_t batch_size = kv.get_size("train_classifier.batch", 8);
  const std::size_t crop = kv.get_size("train_classifier.crop", 512);
  AdamOptions adam_opts;
  adam_opts.lr = kv.get_double("train_classifier.lr", 3e-3);
  require(steps >= 1, "train_classifier.steps must be >= 1");

  const std::vector<Clip> train = training_clips(spec);
  const std::vector<Clip> held = heldout_clips(spec);
  require(!held.empty(), "classifier evaluation needs held-out clips");
  const Batch hb = whole_clips(spec, held);

  PhoneClassifier cls(run.classifier(), run.seed);
  ClassifierReport report;
  {
    Batch silent = hb;
    silent.x = Tensor(hb.x.shape(), 0.0);
    report.constant_input_accuracy = frame_accuracy(cls, silent);
  }
  Adam adam(cls.parameters(), adam_opts);
  report.metrics = run.out / "classifier_metrics.csv";
  MetricsWriter metrics(report.metrics, kClassifierColumns);
  for (std::uint64_t step = 1; step <= steps; ++step) {
    const auto start = Clock::now();
    CounterRng batch_rng(run.seed, stream_id(StreamPurpose::kBatch, step));
    const Batch batch = random_batch(spec, train, batch_size, crop, batch_rng);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = cls.loss(batch.x, batch.labels);
    report.final_loss = loss.item();
    if (!std::isfinite(report.final_loss)) fail(ErrorCode::kNonFinite, "non-finite classifier loss");
    tape.backward(loss);
    adam.step();
    metrics.row(step, {report.final_loss}, ms_since(start));
  }
  cls.mark_trained();
  report.steps = steps;
  report.heldout_accuracy = frame_accuracy(cls, hb);
  say(run, "train-classifier: held-out frame accuracy " + format_double(report.heldout_accuracy));
  if (report.heldout_accuracy < 0.7) {
    fail(ErrorCode::kTrainingFailed, "classifier reached only " + format_double(report.heldout_accuracy) +
                                         " held-out accuracy (< 0.7); the perceptual loss would be meaningless");
  }
  report.checkpoint = run.classifier_checkpoint();
  save_checkpoint(report.checkpoint, classifier_checkpoint(cls, steps, {run.seed, 0, 0}));
  return report;
}

namespace {

DistillReport distill_with(const RunSettings& run, const DistillConfig& cfg, const std::string& preset,
                           const std::filesystem::path& dir) {
  const KeyValues& kv = run.config;
  const CorpusSpec spec = run.corpus();
  const std::uint64_t steps = kv.get_size("distill.steps", 20000);
  const std::size_t batch_size = kv.get_size("distill.batch", 4);
  const std::size_t crop = kv.get_size("distill.crop", spec.clip_length);
  const std::uint64_t every = kv.get_size("distill.checkpoint_every", 1000);
  const std::size_t window = kv.get_size("distill.smoothing", 50);
  AdamOptions adam_opts;
  adam_opts.lr = kv.get_double("distill.lr", 2e-4);
  adam_opts.clip_norm = kv.get_double("distill.clip_norm", 0.0);
  require(steps >= 1 && window >= 1, "distill.steps and distill.smoothing must be >= 1");

  TeacherNet net = load_teacher(run.teacher_checkpoint());
  const WaveNetTeacher teacher(net);
  std::optional<PhoneClassifier> cls;
  if (cfg.uses_perceptual()) {
    cls.emplace(load_classifier(run.classifier_checkpoint()));
    if (!cls->trained()) fail(ErrorCode::kClassifierUntrained, "classifier checkpoint is not marked trained");
  }
  const FlowConfig flow_cfg = run.student();
  require(flow_cfg.conditioning_channels == net.config().conditioning_channels,
          "student and teacher disagree on conditioning channels");
  FlowStack stack(flow_cfg, run.seed);
  Adam adam(stack.parameters(), adam_opts);
  const std::vector<Clip> train = training_clips(spec);

  DistillReport report;
  report.preset = preset;
  report.checkpoint = dir == run.out ? run.student_checkpoint() : dir / "student.pdwn";
  report.metrics = dir / "distill_metrics.csv";
  MetricsWriter metrics(report.metrics, kDistillColumns);
  std::vector<double> kls;
  for (std::uint64_t step = 1; step <= steps; ++step) {
    const auto start = Clock::now();
    CounterRng batch_rng(run.seed, stream_id(StreamPurpose::kBatch, step));
    const Batch b = random_batch(spec, train, batch_size, crop, batch_rng);
    DistillBatch batch;
    batch.c = b.c;
    batch.y_ref = b.x;
    CounterRng latent(run.seed, stream_id(StreamPurpose::kLatent, step));
    CounterRng inner(run.seed, stream_id(StreamPurpose::kInnerSamples, step));
    LossBreakdown br;
    try {
      br = distill_step(stack, teacher, cls ? &*cls : nullptr, batch, cfg, adam, latent, inner);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      fail(ErrorCode::kNonFinite, std::string(e.what()) + " at step " + std::to_string(step) +
                                      "; last good checkpoint kept at " + report.checkpoint.string());
    }
    metrics.row(step, {br.kl, br.cross_entropy, br.entropy, br.power, br.perceptual, br.contrastive, br.total},
                ms_since(start));
    kls.push_back(br.kl);
    report.last = br;
    if (due(step, every, steps)) {
      save_checkpoint(report.checkpoint, student_checkpoint(stack, step, {run.seed, stream_id(StreamPurpose::kLatent, step + 1), 0}));
      say(run, "distill[" + preset + "] step " + std::to_string(step) + " " + br.describe());
    }
  }
  report.steps = steps;
  report.initial_kl = kls.front();
  const std::size_t n = std::min(window, kls.size());
  report.final_kl = 0.0;
  for (std::size_t i = kls.size() - n; i < kls.size(); ++i) report.final_kl += kls[i] / static_cast<double>(n);
  return report;
}

}  // namespace

DistillReport distill(const RunSettings& run) {
  return distill_with(run, run.distill(), run.config.get_string("distill.preset", "kl_power_perceptual_contrastive"),
                      run.out);
}

std::vector<DistillReport> distill_ablation(const RunSettings& run) {
  std::vector<DistillReport> reports;
  for (const std::string preset : {"kl_power", "kl_power_perceptual", "kl_power_perceptual_contrastive"}) {
    const DistillConfig base = DistillConfig::preset(preset);
    DistillConfig cfg = DistillConfig::load(run.config, "distill.", base);
    // Overrides may retune a term but never switch on one the preset leaves out.
    if (!base.uses_perceptual()) cfg.lambda_perceptual = 0.0;
    if (!base.uses_contrastive()) cfg.gamma = 0.0;
    const std::filesystem::path dir = run.out / "ablation" / preset;
    std::filesystem::create_directories(dir);
    reports.push_back(distill_with(run, cfg, preset, dir));
  }
  return reports;
}

}  // namespace pdistill
