#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "distill/classifier.hpp"
#include "distill/distill.hpp"
#include "harness/checkpoint.hpp"
#include "harness/corpus.hpp"
#include "student/student.hpp"
#include "teacher/teacher.hpp"

namespace pdistill {

// Everything a command needs: merged config (file keys overridden by CLI
// keys), the global seed and the output directory. `log` may be null.
struct RunSettings {
  KeyValues config;
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  std::ostream* log = nullptr;

  CorpusSpec corpus() const;
  // Model configs default their conditioning width and phone count to the
  // corpus.
  TeacherConfig teacher() const;
  FlowConfig student() const;
  ClassifierConfig classifier() const;
  DistillConfig distill() const;

  std::filesystem::path path(const std::string& key, const std::string& default_name) const;
  std::filesystem::path teacher_checkpoint() const { return path("paths.teacher", "teacher.pdwn"); }
  std::filesystem::path classifier_checkpoint() const { return path("paths.classifier", "classifier.pdwn"); }
  std::filesystem::path student_checkpoint() const { return path("paths.student", "student.pdwn"); }
};

// Checkpoint <-> model, checking the kind and the stored config.
Checkpoint teacher_checkpoint(const TeacherNet& net, std::uint64_t step, const RngState& rng);
TeacherNet load_teacher(const std::filesystem::path& path);
Checkpoint student_checkpoint(const FlowStack& stack, std::uint64_t step, const RngState& rng);
FlowStack load_student(const std::filesystem::path& path);
Checkpoint classifier_checkpoint(const PhoneClassifier& cls, std::uint64_t step, const RngState& rng);
// Restores the trained flag stored with the weights.
PhoneClassifier load_classifier(const std::filesystem::path& path);

struct TeacherTrainReport {
  std::uint64_t steps = 0;
  double initial_nll = 0.0;
  double final_nll = 0.0;
  double heldout_nll = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};
TeacherTrainReport train_teacher(const RunSettings& run);

struct ClassifierReport {
  std::uint64_t steps = 0;
  double final_loss = 0.0;
  double heldout_accuracy = 0.0;
  // Accuracy of the untrained net's prediction on silent input.
  double constant_input_accuracy = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};
// Fails with kTrainingFailed when held-out accuracy is below 70%.
ClassifierReport train_classifier(const RunSettings& run);
double frame_accuracy(const PhoneClassifier& cls, const Batch& batch);

struct DistillReport {
  std::string preset;
  std::uint64_t steps = 0;
  double initial_kl = 0.0;
  // Trailing mean of the last `distill.smoothing` per-timestep KL values.
  double final_kl = 0.0;
  LossBreakdown last;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};
DistillReport distill(const RunSettings& run);
// Runs the three presets kl_power, kl_power_perceptual and
// kl_power_perceptual_contrastive into <out>/ablation/<preset>/.
std::vector<DistillReport> distill_ablation(const RunSettings& run);

struct SampleReport {
  std::vector<std::filesystem::path> files;
  std::vector<double> teacher_spectrum;
  std::vector<double> student_spectrum;
  // ||S_student - S_teacher|| / ||S_teacher|| over clip-averaged spectra.
  double spectral_distance = 0.0;
};
SampleReport sample(const RunSettings& run);

struct BenchReport {
  std::string mode;  // ancestral or parallel
  std::size_t length = 0;
  std::size_t batch = 1;
  std::size_t threads = 1;
  double wall_seconds = 0.0;
  double timesteps_per_second = 0.0;
};
struct BenchSummary {
  std::vector<BenchReport> reports;  // ancestral/parallel pairs per length
  std::vector<double> speedups;      // parallel / ancestral, per length
};
BenchSummary bench(const RunSettings& run);
// PDISTILL_THREADS if set and positive, else the hardware concurrency.
std::size_t thread_cap();

struct MapRun {
  double mean_log_scale = 0.0;
  double sample_rms = 0.0;
};
struct MapReport {
  MapRun cross_entropy_only;
  MapRun full_kl;
};
MapReport demo_map(const RunSettings& run);

struct FibRow {
  std::string model;  // autoregressive or feedforward
  std::size_t receptive_field = 0;
  std::size_t length = 0;
  double max_abs_error = 0.0;
  double rms_error = 0.0;
};
struct FibReport {
  std::vector<FibRow> rows;
  double autoregressive_error(std::size_t length) const;
  double feedforward_error(std::size_t receptive_field, std::size_t length) const;
};
FibReport demo_fib(const RunSettings& run);

}  // namespace pdistill
