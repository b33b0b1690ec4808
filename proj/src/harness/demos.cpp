#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <chrono>
#include <tuple>
#include <fstream>
#include <ostream>

#include "autodiff/adam.hpp"
#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "distill/losses.hpp"
#include "harness/commands.hpp"
#include "harness/metrics.hpp"

namespace pdistill {
namespace {

struct MapTraining {
  bool full_kl = false;
  std::string name;
};

MapRun train_map_student(const RunSettings& run, const MapTraining& mode) {
  const KeyValues& kv = run.config;
  const std::uint64_t steps = kv.get_size("demo_map.steps", 2000);
  const std::size_t batch = kv.get_size("demo_map.batch", 8);
  const std::size_t length = kv.get_size("demo_map.length", 256);
  const std::size_t draws = kv.get_size("demo_map.inner_samples", 16);
  FlowConfig cfg;
  cfg.flow_layers = kv.get_size_list("demo_map.flow_layers", {2, 2});
  cfg.residual_channels = kv.get_size("demo_map.channels", 16);
  cfg.gate_channels = 2 * cfg.residual_channels;
  AdamOptions opts;
  opts.lr = kv.get_double("demo_map.lr", 1e-2);

  const LogisticTeacher teacher;  // independent unit logistic at every t
  FlowStack stack(cfg, run.seed);  // both students start from the same weights
  Adam adam(stack.parameters(), opts);
  MetricsWriter metrics(run.out / ("demo_map_" + mode.name + ".csv"),
                        {"step", "objective", "mean_log_scale", "rms"});
  const double inv_len = 1.0 / static_cast<double>(length);
  for (std::uint64_t step = 1; step <= steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    CounterRng zr(run.seed, stream_id(StreamPurpose::kLatent, step));
    CounterRng ir(run.seed, stream_id(StreamPurpose::kInnerSamples, step));
    Tape tape;
    Tape::Scope scope(tape);
    const StudentOutput s = student_generate(stack, draw_latent(batch, length, zr), {});
    const Tensor objective =
        mode.full_kl ? ops::scale(kl_loss(s, teacher, {}, draws, ir).kl, inv_len)
                     : ops::scale(cross_entropy_term(s, teacher, {}, draws, ir), inv_len);
    const double value = objective.item();
    if (!std::isfinite(value)) fail(ErrorCode::kNonFinite, "non-finite objective in demo-map");
    tape.backward(objective);
    adam.step();
    double log_s = 0.0, sq = 0.0;
    for (const double v : s.log_s_tot.data()) log_s += v;
    for (const double v : s.x.data()) sq += v * v;
    const double n = static_cast<double>(s.x.size());
    metrics.row(step, {value, log_s / n, std::sqrt(sq / n)},
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }

  // Fresh evaluation batch, shared by both students.
  CounterRng zr(run.seed, stream_id(StreamPurpose::kDemo, 1));
  const StudentOutput s = student_generate(stack, draw_latent(16, 1024, zr), {});
  MapRun out;
  double sq = 0.0;
  for (const double v : s.log_s_tot.data()) out.mean_log_scale += v;
  for (const double v : s.x.data()) sq += v * v;
  const double n = static_cast<double>(s.x.size());
  out.mean_log_scale /= n;
  out.sample_rms = std::sqrt(sq / n);
  return out;
}

}  // namespace

MapReport demo_map(const RunSettings& run) {
  std::filesystem::create_directories(run.out);
  MapReport report;
  report.cross_entropy_only = train_map_student(run, {false, "ce"});
  report.full_kl = train_map_student(run, {true, "kl"});
  std::ofstream csv(run.out / "demo_map_report.csv", std::ios::trunc);
  if (!csv) fail(ErrorCode::kIo, "cannot write demo_map_report.csv");
  csv << "objective,mean_log_scale,sample_rms\n";
  csv << "cross_entropy," << format_double(report.cross_entropy_only.mean_log_scale) << ','
      << format_double(report.cross_entropy_only.sample_rms) << '\n';
  csv << "kl," << format_double(report.full_kl.mean_log_scale) << ',' << format_double(report.full_kl.sample_rms)
      << '\n';
  if (run.log) {
    *run.log << "demo-map: cross-entropy only: mean ln s " << report.cross_entropy_only.mean_log_scale << ", rms "
             << report.cross_entropy_only.sample_rms << "\n"
             << "demo-map: full KL: mean ln s " << report.full_kl.mean_log_scale << ", rms "
             << report.full_kl.sample_rms << std::endl;
  }
  return report;
}

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fibonacci-style sequences from random initial pairs, divided by the
// length-th Fibonacci number so the last terms stay O(1). The fixed scale
// keeps the recurrence exactly linear.
Matrix fib_sequences(std::size_t count, std::size_t length, CounterRng& rng) {
  double fa = 1.0, fb = 1.0;
  for (std::size_t k = 2; k < length; ++k) std::tie(fa, fb) = std::pair(fb, fa + fb);
  const double scale = 1.0 / fb;
  Matrix seqs(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
  for (Eigen::Index i = 0; i < seqs.rows(); ++i) {
    double a = 2.0 * rng.uniform_open() - 1.0, b = 2.0 * rng.uniform_open() - 1.0;
    seqs(i, 0) = a * scale;
    if (length > 1) seqs(i, 1) = b * scale;
    for (Eigen::Index k = 2; k < seqs.cols(); ++k) {
      std::tie(a, b) = std::pair(b, a + b);
      seqs(i, k) = b * scale;
    }
  }
  return seqs;
}

struct Errors {
  double max_abs = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;

  void add(double e) {
    max_abs = std::max(max_abs, std::abs(e));
    sum_sq += e * e;
    ++count;
  }
  double rms() const { return count ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0; }
};

// One-step prediction x_k ~ a x_{k-1} + b x_{k-2}, scored from k = 2 on.
Errors autoregressive_fit(const Matrix& train, const Matrix& test) {
  const Eigen::Index len = train.cols(), rows = train.rows() * (len - 2);
  Matrix a(rows, 2);
  Vector y(rows);
  for (Eigen::Index i = 0, r = 0; i < train.rows(); ++i)
    for (Eigen::Index k = 2; k < len; ++k, ++r) {
      a(r, 0) = train(i, k - 1);
      a(r, 1) = train(i, k - 2);
      y(r) = train(i, k);
    }
  const Vector w = a.colPivHouseholderQr().solve(y);
  Errors e;
  for (Eigen::Index i = 0; i < test.rows(); ++i)
    for (Eigen::Index k = 2; k < len; ++k) e.add(w(0) * test(i, k - 1) + w(1) * test(i, k - 2) - test(i, k));
  return e;
}

// Position-wise linear map from the latent input (the two free initial
// values, then zeros) with receptive field r: x_k sees u_{k-r+1..k}.
Errors feedforward_fit(const Matrix& train, const Matrix& test, std::size_t r) {
  const Eigen::Index len = train.cols(), field = static_cast<Eigen::Index>(r);
  auto latent = [](const Matrix& seqs) {
    Matrix u = Matrix::Zero(seqs.rows(), seqs.cols());
    u.leftCols(std::min<Eigen::Index>(2, seqs.cols())) = seqs.leftCols(std::min<Eigen::Index>(2, seqs.cols()));
    return u;
  };
  const Matrix u_train = latent(train), u_test = latent(test);
  Errors e;
  for (Eigen::Index k = 2; k < len; ++k) {
    Matrix a = Matrix::Zero(train.rows(), field), b = Matrix::Zero(test.rows(), field);
    for (Eigen::Index j = 0; j < field && j <= k; ++j) {
      a.col(j) = u_train.col(k - j);
      b.col(j) = u_test.col(k - j);
    }
    // Minimum-norm solution; columns that are always zero get zero weight.
    const Vector w = a.completeOrthogonalDecomposition().solve(train.col(k));
    const Vector pred = b * w;
    for (Eigen::Index i = 0; i < test.rows(); ++i) e.add(pred(i) - test(i, k));
  }
  return e;
}

}  // namespace

double FibReport::autoregressive_error(std::size_t length) const {
  for (const FibRow& r : rows)
    if (r.model == "autoregressive" && r.length == length) return r.max_abs_error;
  fail(ErrorCode::kInvalidArgument, "no autoregressive row for length " + std::to_string(length));
}

double FibReport::feedforward_error(std::size_t receptive_field, std::size_t length) const {
  for (const FibRow& r : rows)
    if (r.model == "feedforward" && r.receptive_field == receptive_field && r.length == length) return r.max_abs_error;
  fail(ErrorCode::kInvalidArgument, "no feedforward row for r=" + std::to_string(receptive_field) +
                                        ", length " + std::to_string(length));
}

FibReport demo_fib(const RunSettings& run) {
  const KeyValues& kv = run.config;
  const std::size_t n_train = kv.get_size("demo_fib.train_sequences", 200);
  const std::size_t n_test = kv.get_size("demo_fib.test_sequences", 100);
  const std::vector<std::size_t> lengths = kv.get_size_list("demo_fib.lengths", {16, 32, 64});
  const std::vector<std::size_t> fields = kv.get_size_list("demo_fib.receptive_fields", {2, 8, 32, 64});
  require(n_train >= 4 && n_test >= 1, "demo-fib needs at least 4 training and 1 test sequence");
  for (const std::size_t len : lengths) require(len >= 3 && len <= 80, "demo-fib lengths must lie in [3, 80]");
  for (const std::size_t r : fields) require(r >= 1, "receptive fields must be >= 1");

  FibReport report;
  for (const std::size_t len : lengths) {
    CounterRng train_rng(run.seed, stream_id(StreamPurpose::kDemo, 2, len));
    CounterRng test_rng(run.seed, stream_id(StreamPurpose::kDemo, 3, len));
    const Matrix train = fib_sequences(n_train, len, train_rng);
    const Matrix test = fib_sequences(n_test, len, test_rng);
    const Errors ar = autoregressive_fit(train, test);
    report.rows.push_back({"autoregressive", 2, len, ar.max_abs, ar.rms()});
    for (const std::size_t r : fields) {
      const Errors ff = feedforward_fit(train, test, r);
      report.rows.push_back({"feedforward", r, len, ff.max_abs, ff.rms()});
    }
  }
  std::filesystem::create_directories(run.out);
  std::ofstream csv(run.out / "demo_fib.csv", std::ios::trunc);
  if (!csv) fail(ErrorCode::kIo, "cannot write demo_fib.csv");
  csv << "model,receptive_field,length,max_abs_error,rms_error\n";
  for (const FibRow& r : report.rows) {
    csv << r.model << ',' << r.receptive_field << ',' << r.length << ',' << format_double(r.max_abs_error) << ','
        << format_double(r.rms_error) << '\n';
    if (run.log) {
      *run.log << "demo-fib: " << r.model << " r=" << r.receptive_field << " T=" << r.length << " max error "
               << r.max_abs_error << std::endl;
    }
  }
  return report;
}

}  // namespace pdistill
