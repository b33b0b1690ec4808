#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "autodiff/ops.hpp"
#include "core/allocator.hpp"
#include "core/error.hpp"
#include "distill/distill.hpp"
#include "distributions/distributions.hpp"
#include "gradcheck.hpp"
#include "harness/commands.hpp"
#include "harness/metrics.hpp"
#include "oracles.hpp"
#include "teacher/wavenet_layers.hpp"

using namespace pdistill;
using pdistill::testing::check_input_gradients;
using pdistill::testing::check_parameter_gradients;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Tensor random_tensor(Shape shape, CounterRng& rng, double scale = 1.0) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = scale * (2.0 * rng.uniform_open() - 1.0);
  return Tensor(std::move(shape), std::move(v));
}

ConditioningSeq random_conditioning(std::size_t batch, std::size_t channels, std::size_t frames,
                                    std::size_t divisor, std::uint64_t seed) {
  CounterRng rng(seed, 5);
  return {random_tensor(Shape{batch, channels, frames}, rng), divisor};
}

TeacherConfig small_teacher(std::size_t cond) {
  TeacherConfig c;
  c.num_stacks = 2;
  c.layers_per_stack = 3;
  c.residual_channels = 8;
  c.gate_channels = 10;
  c.skip_channels = 6;
  c.num_mixtures = 3;
  c.conditioning_channels = cond;
  return c;
}

FlowConfig small_flows(std::vector<std::size_t> layers, std::size_t cond) {
  FlowConfig f;
  f.flow_layers = std::move(layers);
  f.residual_channels = 6;
  f.gate_channels = 8;
  f.conditioning_channels = cond;
  return f;
}

// Random output heads move the flows away from the identity; a negative
// log-scale bias keeps the composed scale small.
void randomize_heads(FlowStack& stack, std::uint64_t seed, double scale, double log_s_bias = 0.0) {
  CounterRng rng(seed, 44);
  for (std::size_t i = 0; i < stack.config().num_flows(); ++i) {
    const std::string p = "flow." + std::to_string(i) + ".out.";
    for (double& v : stack.parameters().at(p + "w").mutable_data()) v = scale * (2.0 * rng.uniform_open() - 1.0);
    auto b = stack.parameters().at(p + "b").mutable_data();
    b[0] = 0.05 * (2.0 * rng.uniform_open() - 1.0);
    b[1] = log_s_bias / static_cast<double>(stack.config().num_flows());
  }
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> file_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// --- 1 ----------------------------------------------------------------------

Outcome gradient_suite() {
  struct Row {
    std::string name;
    double error, tolerance;
  };
  std::vector<Row> rows;
  CounterRng rng(101, 1);

  {
    Tensor x = random_tensor({2, 3, 20}, rng), w = random_tensor({4, 3, 3}, rng), b = random_tensor({4}, rng);
    for (Tensor* t : {&x, &w, &b}) t->set_requires_grad(true);
    auto loss = [&] { return ops::sum(ops::square(ops::causal_conv1d(x, w, b, 3))); };
    double e = 0.0;
    for (Tensor* t : {&x, &w, &b}) e = std::max(e, check_input_gradients(*t, loss, 20, rng).max_rel_error);
    rows.push_back({"conv", e, 1e-4});
  }
  {
    ParameterSet params;
    wavenet::add_conv(params, "in", 6, 1, 1, 7, 1.0);
    for (std::size_t l = 0; l < 3; ++l) wavenet::add_gated_layer(params, "l" + std::to_string(l), 6, 8, 5, 3, 3, 7);
    CounterRng brng(7, 100);
    for (auto& p : params)
      if (p.name.ends_with(".b"))
        for (double& v : p.tensor.mutable_data()) v = 0.1 * (2.0 * brng.uniform_open() - 1.0);
    const Tensor x = random_tensor({2, 1, 24}, rng), cond = random_tensor({2, 3, 24}, rng);
    auto loss = [&] {
      Tensor h = wavenet::conv(params, "in", ops::shift_right(x));
      Tensor skip;
      for (std::size_t l = 0; l < 3; ++l) {
        const std::string p = "l" + std::to_string(l);
        auto out = wavenet::gated_layer(params, p, h, wavenet::conv(params, p + ".cond", cond), std::size_t{1} << l);
        h = out.residual;
        skip = skip.defined() ? ops::add(skip, out.skip) : out.skip;
      }
      return ops::mean(ops::square(skip));
    };
    rows.push_back({"gating", check_parameter_gradients(params, loss, 30, rng).max_rel_error, 1e-4});
  }
  {
    const MixtureTensors mix{random_tensor({2, 3, 5}, rng, 2.0), random_tensor({2, 3, 5}, rng),
                             random_tensor({2, 3, 5}, rng, 2.0)};
    for (Tensor t : {mix.logits, mix.mus, mix.log_ss}) t.set_requires_grad(true);
    Tensor samples = random_tensor({2, 4, 5}, rng);
    samples.set_requires_grad(true);
    auto loss = [&] { return ops::sum(ops::square(ops::mol_log_density(samples, mix))); };
    double e = check_input_gradients(samples, loss, 20, rng).max_rel_error;
    for (Tensor t : {mix.logits, mix.mus, mix.log_ss}) e = std::max(e, check_input_gradients(t, loss, 15, rng).max_rel_error);
    const DiscretizationSpec d{8};
    std::vector<double> xs(2 * 5);
    for (double& v : xs) v = d.center(rng.below(256));
    const Tensor xq(Shape{2, 1, 5}, xs);
    auto nll = [&] { return ops::sum(ops::discretized_mol_log_prob(xq, mix, d)); };
    for (Tensor t : {mix.logits, mix.mus, mix.log_ss}) e = std::max(e, check_input_gradients(t, nll, 15, rng).max_rel_error);
    rows.push_back({"mol log-density", e, 1e-4});
  }
  {
    FlowStack stack(small_flows({2, 2}, 2), 31);
    randomize_heads(stack, 31, 0.5);
    const ConditioningSeq c = random_conditioning(2, 2, 3, 8, 3);
    CounterRng zr(31, 1);
    const Tensor z = draw_latent(2, 24, zr);
    auto loss = [&] { return student_entropy_term(student_generate(stack, z, c).s_tot); };
    rows.push_back({"entropy term", check_parameter_gradients(stack.parameters(), loss, 20, rng).max_rel_error, 1e-4});
  }
  {
    TeacherConfig tc = small_teacher(2);
    tc.num_stacks = 1;
    TeacherNet net(tc, 11);
    const WaveNetTeacher teacher(net);
    FlowStack stack(small_flows({2, 2}, 2), 12);
    randomize_heads(stack, 13, 0.05, -3.0);
    const ConditioningSeq c = random_conditioning(2, 2, 1, 8, 4);
    CounterRng zr(12, 1);
    const Tensor z = draw_latent(2, 8, zr);
    auto loss = [&] {
      CounterRng ir(12, 2);
      return cross_entropy_term(student_generate(stack, z, c), teacher, c, 256, ir);
    };
    rows.push_back({"cross entropy (M=256, common noise)",
                    check_parameter_gradients(stack.parameters(), loss, 20, rng).max_rel_error, 1e-2});
  }
  {
    SpectrogramSpec spec;
    spec.window_length = 32;
    spec.hop_length = 8;
    Tensor x = random_tensor({2, 1, 72}, rng, 0.5);
    x.set_requires_grad(true);
    auto loss = [&] { return ops::sum(ops::square(stft_power(x, spec))); };
    rows.push_back({"stft power", check_input_gradients(x, loss, 20, rng).max_rel_error, 1e-4});
  }

  Outcome out{true, ""};
  for (const Row& r : rows) {
    out.pass = out.pass && r.error < r.tolerance;
    out.detail += fmt("%s%s %.1e/%.0e", out.detail.empty() ? "" : ", ", r.name.c_str(), r.error, r.tolerance);
  }
  return out;
}

// --- 2 ----------------------------------------------------------------------

Outcome causality_suite() {
  std::size_t probes = 0, leaks = 0, blind = 0;
  {
    const TeacherNet net(small_teacher(3), 6);
    const ConditioningSeq c = random_conditioning(1, 3, 6, 8, 4);
    CounterRng rng(6, 6);
    Tensor x = random_tensor({1, 1, 48}, rng, 0.9);
    x.set_requires_grad(true);
    for (std::size_t t = 0; t < 48; t += 3) {
      x.zero_grad();
      Tape tape;
      Tape::Scope scope(tape);
      const MixtureTensors m = net.forward(x, c);
      tape.backward(ops::add(ops::add(ops::sum(ops::slice_time(m.logits, t, t + 1)),
                                      ops::sum(ops::slice_time(m.mus, t, t + 1))),
                             ops::sum(ops::slice_time(m.log_ss, t, t + 1))));
      ++probes;
      for (std::size_t u = t; u < 48; ++u) leaks += x.grad()[u] != 0.0;
      bool reached = t == 0;
      for (std::size_t u = 0; u < t; ++u) reached = reached || x.grad()[u] != 0.0;
      blind += !reached;
    }
  }
  {
    FlowStack stack(small_flows({3, 2, 4}, 2), 3);
    randomize_heads(stack, 3, 0.3);
    const ConditioningSeq c = random_conditioning(1, 2, 6, 8, 1);
    CounterRng rng(3, 1);
    for (std::size_t flow = 0; flow < 3; ++flow) {
      Tensor x = draw_latent(1, 48, rng);
      x.set_requires_grad(true);
      for (std::size_t t = 0; t < 48; t += 3) {
        x.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        const FlowOutput f = flow_apply(stack, flow, x, c);
        tape.backward(ops::add(ops::sum(ops::slice_time(f.mu, t, t + 1)), ops::sum(ops::slice_time(f.log_s, t, t + 1))));
        ++probes;
        for (std::size_t u = t; u < 48; ++u) leaks += x.grad()[u] != 0.0;
        bool reached = t == 0;
        for (std::size_t u = 0; u < t; ++u) reached = reached || x.grad()[u] != 0.0;
        blind += !reached;
      }
    }
  }
  return {leaks == 0 && blind == 0,
          fmt("%zu probes, %zu non-zero present/future sensitivities, %zu probes with no past sensitivity", probes,
              leaks, blind)};
}

// --- 3 ----------------------------------------------------------------------

Outcome cache_equivalence() {
  const TeacherNet net(small_teacher(3), 14);
  double worst = 0.0;
  bool same_draws = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ConditioningSeq c = random_conditioning(1, 3, 32, 8, seed);
    CounterRng fast(seed, stream_id(StreamPurpose::kAncestral, 0));
    CounterRng slow(seed, stream_id(StreamPurpose::kAncestral, 0));
    const auto a = ancestral_sample(net, c, 256, fast);
    const auto b = pdistill::testing::naive_ancestral_sample(net, c, 256, slow);
    for (std::size_t t = 0; t < 256; ++t) worst = std::max(worst, std::abs(a[t] - b[t]));
    same_draws = same_draws && fast.counter() == slow.counter();
  }
  return {worst < 1e-10 && same_draws, fmt("T=256, 5 seeds, max |cached - naive| = %.2e", worst)};
}

// --- 4 ----------------------------------------------------------------------

Outcome flow_algebra() {
  double worst = 0.0;
  std::size_t stacks = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CounterRng pick(seed, 70 + n);
      std::vector<std::size_t> layers(n);
      for (std::size_t& l : layers) l = 1 + pick.below(3);
      FlowStack stack(small_flows(layers, 2), 10 * n + seed);
      randomize_heads(stack, 10 * n + seed, 0.15);
      const ConditioningSeq c = random_conditioning(2, 2, 8, 8, seed);
      CounterRng rng(seed, n);
      const Tensor z = draw_latent(2, 64, rng);
      const StudentOutput out = student_generate(stack, z, c);
      Tensor x = z;
      for (std::size_t i = 0; i < n; ++i) x = flow_apply(stack, i, x, c).x;
      for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(z[i] * out.s_tot[i] + out.mu_tot[i] - x[i]));
      ++stacks;
    }
  }
  auto flow = [](double mu, double s) {
    FlowOutput f;
    f.mu = Tensor(Shape{1, 1, 1}, mu);
    f.s = Tensor(Shape{1, 1, 1}, s);
    f.log_s = Tensor(Shape{1, 1, 1}, std::log(s));
    return f;
  };
  const ComposedParams ex = compose_params({flow(1, 2), flow(3, 4)});
  const bool example = ex.mu_tot.item() == 7.0 && ex.s_tot.item() == 8.0;
  return {worst < 1e-10 && example,
          fmt("%zu random stacks, max error %.2e; (1,2)(3,4) -> (%g,%g)", stacks, worst, ex.mu_tot.item(),
              ex.s_tot.item())};
}

// --- 5 ----------------------------------------------------------------------

Outcome entropy_identity() {
  FlowStack stack(small_flows({2, 2}, 0), 30);
  randomize_heads(stack, 30, 0.5);
  const std::size_t n = 100000, len = 4;
  CounterRng rng_a(30, 1), rng_b(30, 2);
  const StudentOutput a = student_generate(stack, draw_latent(n, len, rng_a), {});
  const double closed = student_entropy_term(a.s_tot).item();
  const StudentOutput b = student_generate(stack, draw_latent(n, len, rng_b), {});
  double acc = 0.0;
  for (std::size_t i = 0; i < n * len; ++i)
    acc -= logistic_log_density(b.x[i], LogisticParams::from_scale(b.mu_tot[i], b.s_tot[i]));
  const double mc = acc / static_cast<double>(n);
  const double rel = std::abs(closed - mc) / std::abs(closed);
  return {rel < 0.01, fmt("closed form %.5f, Monte Carlo %.5f, relative gap %.3f%%", closed, mc, 100.0 * rel)};
}

// --- 6 ----------------------------------------------------------------------

Outcome normalization() {
  CounterRng rng(8, 1);
  const DiscretizationSpec d{8};
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    MixtureOfLogistics m;
    const std::size_t k = 1 + rng.below(10);
    for (std::size_t i = 0; i < k; ++i) {
      m.logits.push_back(3.0 * (2.0 * rng.uniform_open() - 1.0));
      m.mus.push_back(1.2 * (2.0 * rng.uniform_open() - 1.0));
      m.log_ss.push_back(-6.0 + 6.0 * rng.uniform_open());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < d.bins(); ++i) total += std::exp(discretized_mol_log_prob(d.center(i), m, d));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst < 1e-9, fmt("100 mixtures over %zu bins, max |sum - 1| = %.2e", d.bins(), worst)};
}

// --- 7 to 12 ----------------------------------------------------------------

struct Pipeline {
  KeyValues config;
  std::uint64_t seed = 0;
  fs::path work;
  bool verbose = false;
  bool have_models = false;

  RunSettings settings(const fs::path& out) const {
    RunSettings run;
    run.config = config;
    run.seed = seed;
    run.out = out;
    if (verbose) run.log = &std::cerr;
    return run;
  }
  fs::path main_dir() const { return work / "distillation"; }
  // Settings that read the criterion 7 models.
  RunSettings with_models(const fs::path& out) const {
    RunSettings run = settings(out);
    run.config.set("paths.teacher", (main_dir() / "teacher.pdwn").string());
    run.config.set("paths.classifier", (main_dir() / "classifier.pdwn").string());
    run.config.set("paths.student", (main_dir() / "student.pdwn").string());
    return run;
  }
};

Outcome distillation(Pipeline& p) {
  const RunSettings run = p.settings(p.main_dir());
  const TeacherTrainReport t = train_teacher(run);
  const ClassifierReport c = train_classifier(run);
  const DistillReport d = distill(run);
  const SampleReport s = sample(run);
  p.have_models = true;
  const double drop = 1.0 - d.final_kl / d.initial_kl;
  return {drop >= 0.9 && s.spectral_distance <= 0.1,
          fmt("teacher %llu steps nll %.3f -> %.3f; classifier acc %.3f; %s %llu steps kl %.3f -> %.3f (%.1f%% drop, "
              "need 90%%); spectral distance %.3f (need <= 0.100)",
              static_cast<unsigned long long>(t.steps), t.initial_nll, t.final_nll, c.heldout_accuracy,
              d.preset.c_str(), static_cast<unsigned long long>(d.steps), d.initial_kl, d.final_kl, 100.0 * drop,
              s.spectral_distance)};
}

Outcome speed(const Pipeline& p) {
  RunSettings run = p.have_models ? p.with_models(p.work / "bench") : p.settings(p.work / "bench");
  run.config.set("bench.lengths", "4096,16384,65536");
  run.config.set("bench.batch", "1");
  const BenchSummary b = bench(run);
  std::string detail;
  bool monotone = true;
  double at_16k = 0.0;
  for (std::size_t i = 0; i < b.speedups.size(); ++i) {
    const std::size_t len = b.reports[2 * i].length;
    if (len == 16384) at_16k = b.speedups[i];
    if (i > 0 && b.speedups[i] < b.speedups[i - 1]) monotone = false;
    detail += fmt("%sT=%zu %.0f vs %.0f ts/s (%.2fx)", detail.empty() ? "" : ", ", len,
                  b.reports[2 * i + 1].timesteps_per_second, b.reports[2 * i].timesteps_per_second, b.speedups[i]);
  }
  detail += fmt("; %zu thread(s); need >= 20x at T=16384 and non-decreasing", b.reports[1].threads);
  return {at_16k >= 20.0 && monotone, detail};
}

Outcome map_collapse(const Pipeline& p) {
  const MapReport r = demo_map(p.settings(p.work / "demo_map"));
  const double target = std::numbers::pi / std::sqrt(3.0);
  const auto& ce = r.cross_entropy_only;
  const auto& kl = r.full_kl;
  const bool ok = ce.sample_rms < 0.1 && ce.mean_log_scale < -2.0 && std::abs(kl.mean_log_scale) < 0.1 &&
                  std::abs(kl.sample_rms - target) <= 0.2 * target;
  return {ok, fmt("cross-entropy only: rms %.4f, mean ln s %.3f; full KL: rms %.4f (target %.4f), mean ln s %.4f",
                  ce.sample_rms, ce.mean_log_scale, kl.sample_rms, target, kl.mean_log_scale)};
}

Outcome fibonacci(const Pipeline& p) {
  const FibReport r = demo_fib(p.settings(p.work / "demo_fib"));
  std::set<std::size_t> lengths, fields;
  for (const FibRow& row : r.rows) {
    lengths.insert(row.length);
    if (row.model == "feedforward") fields.insert(row.receptive_field);
  }
  bool ok = !lengths.empty() && !fields.empty();
  std::string detail;
  for (const std::size_t len : lengths) {
    const double ar = r.autoregressive_error(len);
    const double ff = r.feedforward_error(2, len);
    ok = ok && ar < 1e-9 && ff >= 100.0 * ar;
    double previous = INFINITY;
    for (const std::size_t f : fields) {
      const double e = r.feedforward_error(f, len);
      ok = ok && e <= previous;
      previous = e;
    }
    detail += fmt("%sT=%zu ar %.1e ff(2) %.2e", detail.empty() ? "" : ", ", len, ar, ff);
  }
  return {ok, detail + "; feedforward error non-increasing in receptive field checked"};
}

Outcome ablation(const Pipeline& p) {
  RunSettings run = p.have_models ? p.with_models(p.work / "ablation_run") : p.settings(p.work / "ablation_run");
  if (!p.have_models) {
    train_teacher(run);
    train_classifier(run);
  }
  run.config.set("distill.steps", run.config.get_string("acceptance.ablation_steps", "200"));
  const std::size_t steps = run.config.get_size("distill.steps", 200);
  const auto reports = distill_ablation(run);
  bool ok = reports.size() == 3;
  std::string detail;
  for (const DistillReport& r : reports) {
    const MetricsTable t = read_metrics(r.metrics);
    bool finite = true;
    for (const auto& row : t.rows)
      for (const double v : row) finite = finite && std::isfinite(v);
    const bool complete = t.columns == kDistillColumns && t.rows.size() == steps;
    ok = ok && finite && complete;
    detail += fmt("%s%s: %zu rows, total %.3f%s", detail.empty() ? "" : "; ", r.preset.c_str(), t.rows.size(),
                  r.last.total, finite ? "" : " (non-finite)");
  }
  return {ok, detail};
}

Outcome determinism(Pipeline& p) {
  std::vector<std::string> checked, differing;
  auto compare = [&](const std::string& what, bool same) {
    checked.push_back(what);
    if (!same) differing.push_back(what);
  };
  auto prefix_of = [&](const fs::path& full, const fs::path& part) {
    const auto a = file_lines(full), b = file_lines(part);
    return b.size() > 1 && a.size() >= b.size() && std::equal(b.begin(), b.end(), a.begin());
  };
  const std::string steps = p.config.get_string("acceptance.repeat_steps", "60");

  // 7: a short rerun reproduces the first rows of the full run's CSVs.
  if (!p.have_models) distillation(p);
  {
    RunSettings run = p.with_models(p.work / "repeat_distillation");
    run.config.set("paths.teacher", (run.out / "teacher.pdwn").string());
    run.config.set("paths.classifier", (run.out / "classifier.pdwn").string());
    run.config.set("paths.student", (run.out / "student.pdwn").string());
    run.config.set("train_teacher.steps", steps);
    run.config.set("train_classifier.steps", steps);
    RunSettings dist = p.with_models(run.out);
    dist.config.set("paths.student", (run.out / "student.pdwn").string());
    dist.config.set("distill.steps", steps);
    train_teacher(run);
    compare("teacher_metrics.csv", prefix_of(p.main_dir() / "teacher_metrics.csv", run.out / "teacher_metrics.csv"));
    try {
      train_classifier(run);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTrainingFailed) throw;  // short runs may miss the accuracy bar
    }
    compare("classifier_metrics.csv",
            prefix_of(p.main_dir() / "classifier_metrics.csv", run.out / "classifier_metrics.csv"));
    distill(dist);
    compare("distill_metrics.csv", prefix_of(p.main_dir() / "distill_metrics.csv", run.out / "distill_metrics.csv"));
    RunSettings again = p.with_models(p.work / "repeat_sample");
    sample(again);
    compare("sample_spectra.csv",
            file_bytes(p.main_dir() / "sample_spectra.csv") == file_bytes(again.out / "sample_spectra.csv"));
  }
  // 8: wall times differ run to run; everything else in bench.csv must not.
  {
    RunSettings a = p.settings(p.work / "repeat_bench_a"), b = p.settings(p.work / "repeat_bench_b");
    for (RunSettings* r : {&a, &b}) r->config.set("bench.lengths", "1024,2048");
    bench(a);
    bench(b);
    auto columns = [](const fs::path& f) {
      std::vector<std::string> out;
      for (const std::string& line : file_lines(f)) {
        std::string kept;
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i < 4 && std::getline(ss, cell, ','); ++i) kept += cell + ",";
        out.push_back(kept);
      }
      return out;
    };
    compare("bench.csv (non-timing columns)", columns(a.out / "bench.csv") == columns(b.out / "bench.csv"));
  }
  // 9 and 10: full reruns.
  {
    const fs::path again = p.work / "repeat_demo_map";
    demo_map(p.settings(again));
    if (!fs::exists(p.work / "demo_map" / "demo_map_ce.csv")) demo_map(p.settings(p.work / "demo_map"));
    for (const char* f : {"demo_map_ce.csv", "demo_map_kl.csv", "demo_map_report.csv"})
      compare(f, file_bytes(p.work / "demo_map" / f) == file_bytes(again / f));
  }
  {
    const fs::path again = p.work / "repeat_demo_fib";
    demo_fib(p.settings(again));
    if (!fs::exists(p.work / "demo_fib" / "demo_fib.csv")) demo_fib(p.settings(p.work / "demo_fib"));
    compare("demo_fib.csv", file_bytes(p.work / "demo_fib" / "demo_fib.csv") == file_bytes(again / "demo_fib.csv"));
  }
  std::string detail = fmt("%zu of %zu files identical", checked.size() - differing.size(), checked.size());
  for (const std::string& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Runs the acceptance criteria and prints one PASS/FAIL line per criterion."};
  std::string config_path = PDISTILL_SOURCE_DIR "/configs/acceptance.cfg";
  std::string work = "acceptance_work";
  std::vector<int> only, allow_fail;
  std::uint64_t seed = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "config for the training pipeline")->check(CLI::ExistingFile);
  app.add_option("--work", work, "directory for checkpoints and CSVs");
  app.add_option("--seed", seed, "seed for every run");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--allow-fail", allow_fail, "criteria whose FAIL does not change the exit status")->delimiter(',');
  app.add_flag("-v,--verbose", verbose, "training progress on stderr");
  CLI11_PARSE(app, argc, argv);

  Pipeline p;
  p.config = KeyValues::load(config_path);
  p.seed = seed;
  p.work = work;
  p.verbose = verbose;
  fs::create_directories(p.work);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "causality suite", 60, causality_suite},
      {3, "cache equivalence", 120, cache_equivalence},
      {4, "flow algebra", 60, flow_algebra},
      {5, "entropy identity", 60, entropy_identity},
      {6, "normalization", 60, normalization},
      {7, "distillation convergence", 7200, [&] { return distillation(p); }},
      {8, "speed", 600, [&] { return speed(p); }},
      {9, "map collapse demo", 900, [&] { return map_collapse(p); }},
      {10, "fibonacci demo", 120, [&] { return fibonacci(p); }},
      {11, "ablation harness", 3600, [&] { return ablation(p); }},
      {12, "determinism", 3600, [&] { return determinism(p); }},
  };

  int hard_failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_seconds) {
      o.pass = false;
      o.detail += fmt("; took %.0f s, budget %.0f s", seconds, c.budget_seconds);
    }
    const bool allowed = std::find(allow_fail.begin(), allow_fail.end(), c.id) != allow_fail.end();
    if (!o.pass && !allowed) ++hard_failures;
    std::printf("criterion %2d: %s  %s (%s) [%.1f s]%s\n", c.id, o.pass ? "PASS" : "FAIL", c.name.c_str(),
                o.detail.c_str(), seconds, !o.pass && allowed ? " [known failure, see README]" : "");
    std::fflush(stdout);
  }
  return hard_failures == 0 ? 0 : 1;
}
