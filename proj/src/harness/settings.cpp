#include <ostream>

#include "core/error.hpp"
#include "harness/commands.hpp"

namespace pdistill {
namespace {

// Corpus-derived defaults first, then whatever the user set.
KeyValues with_corpus_defaults(const KeyValues& config, const CorpusSpec& corpus) {
  KeyValues kv;
  const std::string cond = std::to_string(corpus.conditioning_channels());
  kv.set("teacher.conditioning_channels", cond);
  kv.set("student.conditioning_channels", cond);
  kv.set("classifier.num_phones", std::to_string(corpus.num_phones));
  kv.set("classifier.frame_divisor", std::to_string(corpus.frame_divisor));
  kv.merge(config);
  return kv;
}

}  // namespace

CorpusSpec RunSettings::corpus() const { return CorpusSpec::load(config, "corpus."); }

TeacherConfig RunSettings::teacher() const {
  return TeacherConfig::load(with_corpus_defaults(config, corpus()), "teacher.");
}

FlowConfig RunSettings::student() const {
  return FlowConfig::load(with_corpus_defaults(config, corpus()), "student.");
}

ClassifierConfig RunSettings::classifier() const {
  return ClassifierConfig::load(with_corpus_defaults(config, corpus()), "classifier.");
}

DistillConfig RunSettings::distill() const { return DistillConfig::load(config, "distill."); }

std::filesystem::path RunSettings::path(const std::string& key, const std::string& default_name) const {
  const std::string value = config.get_string(key, "");
  return value.empty() ? out / default_name : std::filesystem::path(value);
}

namespace {

Checkpoint model_checkpoint(const std::string& kind, const ParameterSet& params, std::uint64_t step,
                            const RngState& rng) {
  Checkpoint ckpt;
  ckpt.config.set("kind", kind);
  store_parameters(ckpt, params);
  ckpt.step = step;
  ckpt.rng = rng;
  return ckpt;
}

}  // namespace

Checkpoint teacher_checkpoint(const TeacherNet& net, std::uint64_t step, const RngState& rng) {
  Checkpoint ckpt = model_checkpoint("teacher", net.parameters(), step, rng);
  net.config().store(ckpt.config, "teacher.");
  return ckpt;
}

TeacherNet load_teacher(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  expect_kind(ckpt, "teacher");
  TeacherNet net(TeacherConfig::load(ckpt.config, "teacher."), 0);
  restore_parameters(ckpt, net.parameters());
  return net;
}

Checkpoint student_checkpoint(const FlowStack& stack, std::uint64_t step, const RngState& rng) {
  Checkpoint ckpt = model_checkpoint("student", stack.parameters(), step, rng);
  stack.config().store(ckpt.config, "student.");
  return ckpt;
}

FlowStack load_student(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  expect_kind(ckpt, "student");
  FlowStack stack(FlowConfig::load(ckpt.config, "student."), 0);
  restore_parameters(ckpt, stack.parameters());
  return stack;
}

Checkpoint classifier_checkpoint(const PhoneClassifier& cls, std::uint64_t step, const RngState& rng) {
  Checkpoint ckpt = model_checkpoint("classifier", cls.parameters(), step, rng);
  cls.config().store(ckpt.config, "classifier.");
  ckpt.config.set("classifier.trained", cls.trained() ? "1" : "0");
  return ckpt;
}

PhoneClassifier load_classifier(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  expect_kind(ckpt, "classifier");
  PhoneClassifier cls(ClassifierConfig::load(ckpt.config, "classifier."), 0);
  restore_parameters(ckpt, cls.parameters());
  cls.set_trained_flag(ckpt.config.get_int("classifier.trained", 0) != 0);
  return cls;
}

}  // namespace pdistill
