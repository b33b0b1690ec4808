// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdistill/pdistill.h"

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::vector<std::string> sets;
  bool quiet = false;
};

// Flag values that map straight onto config keys; applied last so they win.
using Overrides = std::map<std::string, std::optional<std::string>>;

int report_failure(pd_status status, const char* what) {
  std::fprintf(stderr, "pdistill %s: %s: %s\n", what, pd_status_name(status), pd_last_error());
  return static_cast<int>(status);
}

class Session {
 public:
  Session(const Globals& g, const Overrides& overrides) {
    status_ = pd_session_create(&s_);
    if (status_ != PD_OK) return;
    if (!g.config.empty() && (status_ = pd_session_load_config(s_, g.config.c_str())) != PD_OK) return;
    for (const std::string& kv : g.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "pdistill: --set expects key=value, got '%s'\n", kv.c_str());
        status_ = PD_ERR_INVALID_ARGUMENT;
        return;
      }
      if ((status_ = pd_session_set(s_, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != PD_OK) return;
    }
    for (const auto& [key, value] : overrides)
      if (value && (status_ = pd_session_set(s_, key.c_str(), value->c_str())) != PD_OK) return;
    if ((status_ = pd_session_set_seed(s_, g.seed)) != PD_OK) return;
    if ((status_ = pd_session_set_out(s_, g.out.c_str())) != PD_OK) return;
    status_ = pd_session_set_verbose(s_, g.quiet ? 0 : 1);
  }
  ~Session() { pd_session_destroy(s_); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  pd_session* get() const { return s_; }
  pd_status status() const { return status_; }

 private:
  pd_session* s_ = nullptr;
  pd_status status_ = PD_OK;
};

void print_distill(const pd_distill_report& r) {
  std::printf("%s: steps=%llu initial_kl=%.6g final_kl=%.6g kl=%.6g ce=%.6g h=%.6g power=%.6g perceptual=%.6g "
              "contrastive=%.6g total=%.6g\n",
              r.preset, static_cast<unsigned long long>(r.steps), r.initial_kl, r.final_kl, r.kl, r.cross_entropy,
              r.entropy, r.power, r.perceptual, r.contrastive, r.total);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probability density distillation at desk scale"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");
  app.add_flag("-q,--quiet", g.quiet, "no progress output");

  Overrides ov;
  auto opt = [&](CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = ov[key];
    cmd->add_option_function<std::string>(flag, [&slot](const std::string& v) { slot = v; }, help);
  };

  auto* teacher = app.add_subcommand("train-teacher", "train the autoregressive teacher");
  opt(teacher, "--steps", "train_teacher.steps", "optimisation steps");
  opt(teacher, "--lr", "train_teacher.lr", "Adam learning rate");

  auto* classifier = app.add_subcommand("train-classifier", "train the phone classifier used by the perceptual loss");
  opt(classifier, "--steps", "train_classifier.steps", "optimisation steps");

  auto* dist = app.add_subcommand("distill", "distil the teacher into the parallel student");
  opt(dist, "--steps", "distill.steps", "optimisation steps");
  opt(dist, "--preset", "distill.preset", "kl, kl_power, kl_power_perceptual or kl_power_perceptual_contrastive");
  opt(dist, "--teacher", "paths.teacher", "teacher checkpoint");
  opt(dist, "--classifier", "paths.classifier", "classifier checkpoint");
  bool ablation = false;
  dist->add_flag("--ablation", ablation, "run the three ablation presets");

  auto* smp = app.add_subcommand("sample", "write teacher and student samples as WAV files");
  opt(smp, "--count", "sample.count", "number of clips");
  opt(smp, "--teacher", "paths.teacher", "teacher checkpoint");
  opt(smp, "--student", "paths.student", "student checkpoint");

  auto* bench = app.add_subcommand("bench", "time ancestral against parallel sampling");
  opt(bench, "--lengths", "bench.lengths", "comma-separated sequence lengths");
  opt(bench, "--repeats", "bench.repeats", "repetitions per measurement (>= 3)");

  auto* map = app.add_subcommand("demo-map", "cross-entropy only against full KL on a white-noise teacher");
  opt(map, "--steps", "demo_map.steps", "steps per student");

  auto* fib = app.add_subcommand("demo-fib", "receptive field needed for Fibonacci-style sequences");
  opt(fib, "--lengths", "demo_fib.lengths", "comma-separated sequence lengths");

  CLI11_PARSE(app, argc, argv);

  Session session(g, ov);
  if (session.status() != PD_OK) return report_failure(session.status(), "setup");
  pd_session* s = session.get();

  if (*teacher) {
    pd_teacher_report r{};
    if (const pd_status st = pd_train_teacher(s, &r); st != PD_OK) return report_failure(st, "train-teacher");
    std::printf("train-teacher: steps=%llu initial_nll=%.6g final_nll=%.6g heldout_nll=%.6g\n",
                static_cast<unsigned long long>(r.steps), r.initial_nll, r.final_nll, r.heldout_nll);
  } else if (*classifier) {
    pd_classifier_report r{};
    if (const pd_status st = pd_train_classifier(s, &r); st != PD_OK) return report_failure(st, "train-classifier");
    std::printf("train-classifier: steps=%llu loss=%.6g heldout_accuracy=%.4f constant_input_accuracy=%.4f\n",
                static_cast<unsigned long long>(r.steps), r.final_loss, r.heldout_accuracy,
                r.constant_input_accuracy);
  } else if (*dist) {
    if (ablation) {
      pd_distill_report reports[3]{};
      std::size_t n = 0;
      if (const pd_status st = pd_distill_ablation(s, reports, 3, &n); st != PD_OK) return report_failure(st, "distill");
      for (std::size_t i = 0; i < n && i < 3; ++i) print_distill(reports[i]);
    } else {
      pd_distill_report r{};
      if (const pd_status st = pd_distill(s, &r); st != PD_OK) return report_failure(st, "distill");
      print_distill(r);
    }
  } else if (*smp) {
    pd_sample_report r{};
    if (const pd_status st = pd_sample(s, &r); st != PD_OK) return report_failure(st, "sample");
    std::printf("sample: wrote %zu files, spectral_distance=%.6g\n", r.files_written, r.spectral_distance);
  } else if (*bench) {
    std::vector<pd_bench_report> reports(256);
    std::size_t n = 0;
    if (const pd_status st = pd_bench(s, reports.data(), reports.size(), &n); st != PD_OK) {
      return report_failure(st, "bench");
    }
    reports.resize(std::min(n, reports.size()));
    std::printf("%-9s %8s %5s %7s %12s %16s\n", "mode", "T", "batch", "threads", "wall_s", "timesteps/s");
    for (const auto& r : reports) {
      std::printf("%-9s %8zu %5zu %7zu %12.4f %16.1f\n", r.mode == PD_BENCH_PARALLEL ? "parallel" : "ancestral",
                  r.length, r.batch, r.threads, r.wall_seconds, r.timesteps_per_second);
    }
    for (std::size_t i = 0; i + 1 < reports.size(); i += 2) {
      std::printf("speedup T=%zu: %.3f\n", reports[i].length,
                  reports[i + 1].timesteps_per_second / reports[i].timesteps_per_second);
    }
  } else if (*map) {
    pd_map_report r{};
    if (const pd_status st = pd_demo_map(s, &r); st != PD_OK) return report_failure(st, "demo-map");
    std::printf("demo-map: cross-entropy only: mean_ln_s=%.4f rms=%.4f\n", r.ce_mean_log_scale, r.ce_rms);
    std::printf("demo-map: full KL:            mean_ln_s=%.4f rms=%.4f\n", r.kl_mean_log_scale, r.kl_rms);
  } else if (*fib) {
    std::vector<pd_fib_row> rows(1024);
    std::size_t n = 0;
    if (const pd_status st = pd_demo_fib(s, rows.data(), rows.size(), &n); st != PD_OK) {
      return report_failure(st, "demo-fib");
    }
    rows.resize(std::min(n, rows.size()));
    for (const auto& r : rows) {
      std::printf("%-14s r=%-3zu T=%-3zu max_abs_error=%.3e rms_error=%.3e\n",
                  r.model == PD_FIB_AUTOREGRESSIVE ? "autoregressive" : "feedforward", r.receptive_field, r.length,
                  r.max_abs_error, r.rms_error);
    }
  }
  return 0;
}
