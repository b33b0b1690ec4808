#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <thread>

#include "core/error.hpp"
#include "distill/spectral.hpp"
#include "harness/commands.hpp"
#include "harness/wav.hpp"

namespace pdistill {
namespace {

std::vector<double> clip_average(const std::vector<double>& per_row, std::size_t rows) {
  const std::size_t bins = per_row.size() / rows;
  std::vector<double> avg(bins, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < bins; ++k) avg[k] += per_row[r * bins + k] / static_cast<double>(rows);
  return avg;
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    num += (a[k] - ref[k]) * (a[k] - ref[k]);
    den += ref[k] * ref[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

SampleReport sample(const RunSettings& run) {
  const CorpusSpec spec = run.corpus();
  const std::size_t count = run.config.get_size("sample.count", 4);
  const std::size_t length = run.config.get_size("sample.length", spec.clip_length);
  require(count >= 1, "sample.count must be >= 1");
  require(length >= spec.frame_divisor && length % spec.frame_divisor == 0 && length <= spec.clip_length,
          "sample.length must be a multiple of the frame size no longer than a clip");

  const TeacherNet net = load_teacher(run.teacher_checkpoint());
  const FlowStack stack = load_student(run.student_checkpoint());
  // Conditioning comes from held-out clips, cycling if there are few.
  std::vector<Clip> held = heldout_clips(spec);
  if (held.empty()) held = training_clips(spec);
  std::vector<std::size_t> rows(count), starts(count, 0);
  for (std::size_t i = 0; i < count; ++i) rows[i] = i % held.size();
  const Batch batch = make_batch(spec, held, rows, starts, length);

  std::vector<double> teacher_x(count * length);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(run.seed, stream_id(StreamPurpose::kAncestral, i));
    const std::vector<double> x = ancestral_sample(net, batch.c.row(i), length, rng);
    std::copy(x.begin(), x.end(), teacher_x.begin() + static_cast<std::ptrdiff_t>(i * length));
  }
  CounterRng zr(run.seed, stream_id(StreamPurpose::kLatent, 0, 1));
  const StudentOutput s = student_generate(stack, draw_latent(count, length, zr), batch.c);
  std::vector<double> student_x(s.x.data().begin(), s.x.data().end());
  for (double& v : student_x) v = std::clamp(v, -1.0, 1.0);

  SampleReport report;
  std::filesystem::create_directories(run.out);
  const auto rate = static_cast<std::uint32_t>(std::lround(spec.sample_rate));
  for (std::size_t i = 0; i < count; ++i) {
    const std::span<const double> t(teacher_x.data() + i * length, length);
    const std::span<const double> st(student_x.data() + i * length, length);
    report.files.push_back(run.out / ("teacher_" + std::to_string(i) + ".wav"));
    write_wav(t, rate, report.files.back());
    report.files.push_back(run.out / ("student_" + std::to_string(i) + ".wav"));
    write_wav(st, rate, report.files.back());
  }

  SpectrogramSpec stft = SpectrogramSpec::load(run.config, "stft.");
  const Tensor tx(Shape{count, 1, length}, teacher_x), sx(Shape{count, 1, length}, student_x);
  report.teacher_spectrum = clip_average(mean_power_spectrum(tx, stft), count);
  report.student_spectrum = clip_average(mean_power_spectrum(sx, stft), count);
  report.spectral_distance = relative_l2(report.student_spectrum, report.teacher_spectrum);

  std::ofstream csv(run.out / "sample_spectra.csv", std::ios::trunc);
  if (!csv) fail(ErrorCode::kIo, "cannot write sample_spectra.csv");
  csv << "bin,teacher,student\n";
  for (std::size_t k = 0; k < report.teacher_spectrum.size(); ++k) {
    csv << k << ',' << format_double(report.teacher_spectrum[k]) << ','
        << format_double(report.student_spectrum[k]) << '\n';
  }
  if (run.log) *run.log << "sample: spectral distance " << format_double(report.spectral_distance) << std::endl;
  return report;
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("PDISTILL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Fn>
double time_median(std::size_t repeats, Fn&& fn) {
  std::vector<double> secs;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn(r);
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return median(std::move(secs));
}

// Runs fn(row) for every row on at most `threads` threads.
template <typename Fn>
void for_rows(std::size_t rows, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || rows <= 1) {
    for (std::size_t b = 0; b < rows; ++b) fn(b);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(threads, rows); ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t b = w; b < rows; b += threads) fn(b);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace

BenchSummary bench(const RunSettings& run) {
  const KeyValues& kv = run.config;
  const std::vector<std::size_t> lengths = kv.get_size_list("bench.lengths", {4096, 16384, 65536});
  const std::size_t repeats = kv.get_size("bench.repeats", 3);
  const std::size_t batch = kv.get_size("bench.batch", 1);
  require(repeats >= 3, "bench.repeats must be >= 3");
  require(batch >= 1 && !lengths.empty(), "bench needs a batch and at least one length");

  // Speed does not depend on the weights, so checkpoints are optional.
  const bool have_teacher = std::filesystem::exists(run.teacher_checkpoint());
  const bool have_student = std::filesystem::exists(run.student_checkpoint());
  const TeacherNet net = have_teacher ? load_teacher(run.teacher_checkpoint()) : TeacherNet(run.teacher(), run.seed);
  const FlowStack stack = have_student ? load_student(run.student_checkpoint()) : FlowStack(run.student(), run.seed);
  const std::size_t cond = net.config().conditioning_channels;
  require(cond == stack.config().conditioning_channels, "student and teacher disagree on conditioning channels");
  const std::size_t threads = std::min(thread_cap(), batch);

  BenchSummary summary;
  for (const std::size_t len : lengths) {
    const std::size_t div = run.corpus().frame_divisor;
    const std::size_t frames = (len + div - 1) / div;
    ConditioningSeq c;
    if (cond > 0) c = {Tensor(Shape{batch, cond, frames}, 0.0), div};

    // The sequential path is pinned to one thread.
    BenchReport ancestral{"ancestral", len, batch, 1, 0.0, 0.0};
    ancestral.wall_seconds = time_median(repeats, [&](std::size_t r) {
      for (std::size_t b = 0; b < batch; ++b) {
        CounterRng rng(run.seed, stream_id(StreamPurpose::kAncestral, r, b));
        ancestral_sample(net, cond > 0 ? c.row(b) : c, len, rng);
      }
    });
    BenchReport parallel{"parallel", len, batch, threads, 0.0, 0.0};
    parallel.wall_seconds = time_median(repeats, [&](std::size_t r) {
      for_rows(batch, threads, [&](std::size_t b) {
        CounterRng zr(run.seed, stream_id(StreamPurpose::kLatent, r, b));
        student_generate(stack, draw_latent(1, len, zr), cond > 0 ? c.row(b) : c);
      });
    });
    for (BenchReport* rep : {&ancestral, &parallel}) {
      rep->timesteps_per_second = static_cast<double>(len * batch) / rep->wall_seconds;
      summary.reports.push_back(*rep);
    }
    summary.speedups.push_back(parallel.timesteps_per_second / ancestral.timesteps_per_second);
    if (run.log) {
      *run.log << "bench T=" << len << ": ancestral " << ancestral.timesteps_per_second << " ts/s, parallel "
               << parallel.timesteps_per_second << " ts/s, speedup " << summary.speedups.back() << std::endl;
    }
  }

  std::filesystem::create_directories(run.out);
  std::ofstream csv(run.out / "bench.csv", std::ios::trunc);
  if (!csv) fail(ErrorCode::kIo, "cannot write bench.csv");
  csv << "mode,T,batch,threads,wall_seconds,timesteps_per_second\n";
  for (const BenchReport& r : summary.reports) {
    csv << r.mode << ',' << r.length << ',' << r.batch << ',' << r.threads << ',' << format_double(r.wall_seconds)
        << ',' << format_double(r.timesteps_per_second) << '\n';
  }
  std::ofstream sp(run.out / "bench_speedup.csv", std::ios::trunc);
  sp << "T,speedup\n";
  for (std::size_t i = 0; i < lengths.size(); ++i) sp << lengths[i] << ',' << format_double(summary.speedups[i]) << '\n';
  return summary;
}

}  // namespace pdistill
