#include "pdistill/pdistill.h"

#include <cstring>
#include <exception>
#include <iostream>
#include <new>
#include <string>

#include "core/allocator.hpp"
#include "core/error.hpp"
#include "harness/commands.hpp"
#include "harness/wav.hpp"

struct pd_session {
  pdistill::RunSettings run;
};

struct pd_teacher {
  pdistill::TeacherNet net;
};

struct pd_student {
  pdistill::FlowStack stack;
};

namespace {

thread_local std::string last_error;

// Runs fn, mapping exceptions onto status codes.
template <typename Fn>
pd_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return PD_OK;
  } catch (const pdistill::Error& e) {
    last_error = e.what();
    return static_cast<pd_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return PD_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) pdistill::fail(pdistill::ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

pdistill::ConditioningSeq conditioning(const double* c, std::size_t channels, std::size_t frames,
                                       std::size_t divisor) {
  if (channels == 0) return {};
  need(c, "conditioning");
  pdistill::require(frames > 0 && divisor > 0, "conditioning needs frames and a frame divisor");
  return {pdistill::Tensor(pdistill::Shape{1, channels, frames}, std::vector<double>(c, c + channels * frames)),
          divisor};
}

void fill(pd_distill_report& out, const pdistill::DistillReport& r) {
  std::memset(&out, 0, sizeof out);
  std::strncpy(out.preset, r.preset.c_str(), sizeof out.preset - 1);
  out.steps = r.steps;
  out.initial_kl = r.initial_kl;
  out.final_kl = r.final_kl;
  out.kl = r.last.kl;
  out.cross_entropy = r.last.cross_entropy;
  out.entropy = r.last.entropy;
  out.power = r.last.power;
  out.perceptual = r.last.perceptual;
  out.contrastive = r.last.contrastive;
  out.total = r.last.total;
}

}  // namespace

extern "C" {

const char* pd_last_error(void) { return last_error.c_str(); }

const char* pd_status_name(pd_status status) {
  switch (status) {
    case PD_OK: return "ok";
    case PD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PD_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case PD_ERR_NON_FINITE: return "non-finite value";
    case PD_ERR_IO: return "i/o error";
    case PD_ERR_CHECKPOINT_MAGIC: return "corrupt checkpoint header";
    case PD_ERR_CHECKPOINT_VERSION: return "unknown checkpoint version";
    case PD_ERR_CHECKPOINT_TRUNCATED: return "truncated checkpoint";
    case PD_ERR_CHECKPOINT_CHECKSUM: return "checkpoint checksum mismatch";
    case PD_ERR_CHECKPOINT_KIND: return "wrong checkpoint kind";
    case PD_ERR_CLASSIFIER_UNTRAINED: return "classifier not trained";
    case PD_ERR_TRAINING_FAILED: return "training failed";
    case PD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pd_version(void) { return "0.1.0"; }

pd_status pd_session_create(pd_session** out) {
  return guarded([&] {
    need(out, "out");
    pdistill::tune_allocator();
    *out = new pd_session{};
  });
}

void pd_session_destroy(pd_session* session) { delete session; }

pd_status pd_session_load_config(pd_session* session, const char* path) {
  return guarded([&] {
    need(session, "session");
    need(path, "path");
    session->run.config.merge(pdistill::KeyValues::load(path));
  });
}

pd_status pd_session_set(pd_session* session, const char* key, const char* value) {
  return guarded([&] {
    need(session, "session");
    need(key, "key");
    need(value, "value");
    session->run.config.set(key, value);
  });
}

pd_status pd_session_set_seed(pd_session* session, uint64_t seed) {
  return guarded([&] {
    need(session, "session");
    session->run.seed = seed;
  });
}

pd_status pd_session_set_out(pd_session* session, const char* dir) {
  return guarded([&] {
    need(session, "session");
    need(dir, "dir");
    session->run.out = dir;
  });
}

pd_status pd_session_set_verbose(pd_session* session, int verbose) {
  return guarded([&] {
    need(session, "session");
    session->run.log = verbose ? &std::cerr : nullptr;
  });
}

pd_status pd_train_teacher(pd_session* session, pd_teacher_report* report) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::train_teacher(session->run);
    if (report) *report = {r.steps, r.initial_nll, r.final_nll, r.heldout_nll};
  });
}

pd_status pd_train_classifier(pd_session* session, pd_classifier_report* report) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::train_classifier(session->run);
    if (report) *report = {r.steps, r.final_loss, r.heldout_accuracy, r.constant_input_accuracy};
  });
}

pd_status pd_distill(pd_session* session, pd_distill_report* report) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::distill(session->run);
    if (report) fill(*report, r);
  });
}

pd_status pd_distill_ablation(pd_session* session, pd_distill_report* reports, size_t capacity, size_t* count) {
  return guarded([&] {
    need(session, "session");
    const auto all = pdistill::distill_ablation(session->run);
    for (std::size_t i = 0; i < all.size() && i < capacity && reports; ++i) fill(reports[i], all[i]);
    if (count) *count = all.size();
  });
}

pd_status pd_sample(pd_session* session, pd_sample_report* report) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::sample(session->run);
    if (report) *report = {r.files.size(), r.spectral_distance};
  });
}

pd_status pd_bench(pd_session* session, pd_bench_report* reports, size_t capacity, size_t* count) {
  return guarded([&] {
    need(session, "session");
    const auto summary = pdistill::bench(session->run);
    for (std::size_t i = 0; i < summary.reports.size() && i < capacity && reports; ++i) {
      const auto& r = summary.reports[i];
      reports[i] = {r.mode == "parallel" ? PD_BENCH_PARALLEL : PD_BENCH_ANCESTRAL, r.length, r.batch, r.threads,
                    r.wall_seconds, r.timesteps_per_second};
    }
    if (count) *count = summary.reports.size();
  });
}

pd_status pd_demo_map(pd_session* session, pd_map_report* report) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::demo_map(session->run);
    if (report) {
      *report = {r.cross_entropy_only.mean_log_scale, r.cross_entropy_only.sample_rms, r.full_kl.mean_log_scale,
                 r.full_kl.sample_rms};
    }
  });
}

pd_status pd_demo_fib(pd_session* session, pd_fib_row* rows, size_t capacity, size_t* count) {
  return guarded([&] {
    need(session, "session");
    const auto r = pdistill::demo_fib(session->run);
    for (std::size_t i = 0; i < r.rows.size() && i < capacity && rows; ++i) {
      const auto& row = r.rows[i];
      rows[i] = {row.model == "autoregressive" ? PD_FIB_AUTOREGRESSIVE : PD_FIB_FEEDFORWARD, row.receptive_field,
                 row.length, row.max_abs_error, row.rms_error};
    }
    if (count) *count = r.rows.size();
  });
}

pd_status pd_teacher_load(const char* path, pd_teacher** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pd_teacher{pdistill::load_teacher(path)};
  });
}

void pd_teacher_free(pd_teacher* teacher) { delete teacher; }

size_t pd_teacher_receptive_field(const pd_teacher* teacher) {
  return teacher ? pdistill::receptive_field(teacher->net.config()) : 0;
}

size_t pd_teacher_conditioning_channels(const pd_teacher* teacher) {
  return teacher ? teacher->net.config().conditioning_channels : 0;
}

pd_status pd_teacher_sample(const pd_teacher* teacher, const double* c, size_t frames, size_t frame_divisor,
                            size_t length, uint64_t seed, double* out) {
  return guarded([&] {
    need(teacher, "teacher");
    need(out, "out");
    const auto cond = conditioning(c, teacher->net.config().conditioning_channels, frames, frame_divisor);
    pdistill::CounterRng rng(seed, pdistill::stream_id(pdistill::StreamPurpose::kAncestral, 0));
    const auto x = pdistill::ancestral_sample(teacher->net, cond, length, rng);
    std::copy(x.begin(), x.end(), out);
  });
}

pd_status pd_student_load(const char* path, pd_student** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pd_student{pdistill::load_student(path)};
  });
}

void pd_student_free(pd_student* student) { delete student; }

size_t pd_student_conditioning_channels(const pd_student* student) {
  return student ? student->stack.config().conditioning_channels : 0;
}

pd_status pd_student_generate(const pd_student* student, const double* c, size_t frames, size_t frame_divisor,
                              const double* z, size_t length, uint64_t seed, double* out) {
  return guarded([&] {
    need(student, "student");
    need(out, "out");
    pdistill::require(length > 0, "length must be positive");
    const auto cond = conditioning(c, student->stack.config().conditioning_channels, frames, frame_divisor);
    pdistill::Tensor latent;
    if (z) {
      latent = pdistill::Tensor(pdistill::Shape{1, 1, length}, std::vector<double>(z, z + length));
    } else {
      pdistill::CounterRng rng(seed, pdistill::stream_id(pdistill::StreamPurpose::kLatent, 0));
      latent = pdistill::draw_latent(1, length, rng);
    }
    const auto s = pdistill::student_generate(student->stack, latent, cond);
    std::copy(s.x.data().begin(), s.x.data().end(), out);
  });
}

pd_status pd_checkpoint_inspect(const char* path, char* kind, size_t kind_capacity, uint64_t* step) {
  return guarded([&] {
    need(path, "path");
    const auto ckpt = pdistill::load_checkpoint(path);
    if (kind && kind_capacity > 0) {
      const std::string k = ckpt.kind();
      const std::size_t n = std::min(k.size(), kind_capacity - 1);
      std::memcpy(kind, k.data(), n);
      kind[n] = '\0';
    }
    if (step) *step = ckpt.step;
  });
}

pd_status pd_write_wav(const char* path, const double* samples, size_t count, uint32_t sample_rate) {
  return guarded([&] {
    need(path, "path");
    if (count > 0) need(samples, "samples");
    pdistill::write_wav(std::span<const double>(samples, count), sample_rate, path);
  });
}

}  // extern "C"
