#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pdistill/pdistill.h"

namespace fs = std::filesystem;

namespace {

struct Session {
  Session() { REQUIRE(pd_session_create(&s) == PD_OK); }
  ~Session() { pd_session_destroy(s); }
  pd_session* s = nullptr;
};

struct TempDir {
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("pdistill_capi_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

void tiny(pd_session* s, const fs::path& out) {
  const char* kv[][2] = {{"corpus.train_clips", "4"},         {"corpus.heldout_clips", "2"},
                         {"teacher.num_stacks", "1"},         {"teacher.layers_per_stack", "2"},
                         {"teacher.residual_channels", "4"},  {"teacher.gate_channels", "4"},
                         {"teacher.skip_channels", "4"},      {"teacher.num_mixtures", "2"},
                         {"train_teacher.steps", "3"},        {"train_teacher.batch", "2"},
                         {"train_teacher.crop", "128"},       {"student.flow_layers", "1,1"},
                         {"student.residual_channels", "4"},  {"student.gate_channels", "4"},
                         {"distill.preset", "kl_power"},      {"distill.steps", "2"},
                         {"distill.batch", "2"},              {"distill.crop", "128"},
                         {"distill.inner_samples", "2"},      {"stft.window_length", "32"},
                         {"stft.hop_length", "8"}};
  for (const auto& [k, v] : kv) REQUIRE(pd_session_set(s, k, v) == PD_OK);
  REQUIRE(pd_session_set_seed(s, 11) == PD_OK);
  REQUIRE(pd_session_set_out(s, out.c_str()) == PD_OK);
}

std::vector<char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("status names and argument checks") {
  CHECK(std::string(pd_status_name(PD_OK)) == "ok");
  CHECK(std::string(pd_status_name(PD_ERR_CHECKPOINT_CHECKSUM)) != std::string(pd_status_name(PD_ERR_IO)));
  CHECK(std::strlen(pd_version()) > 0);
  CHECK(pd_session_create(nullptr) == PD_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(pd_last_error()) > 0);
  Session s;
  CHECK(std::strlen(pd_last_error()) == 0);
  CHECK(pd_session_set(s.s, nullptr, "1") == PD_ERR_INVALID_ARGUMENT);
  CHECK(pd_train_teacher(nullptr, nullptr) == PD_ERR_INVALID_ARGUMENT);
  CHECK(pd_session_load_config(s.s, "/nonexistent/pdistill.cfg") == PD_ERR_IO);
  pd_session_destroy(nullptr);
  pd_teacher_free(nullptr);
  pd_student_free(nullptr);
}

TEST_CASE("config files merge with later keys winning") {
  TempDir dir("config");
  {
    std::ofstream f(dir.path / "a.cfg");
    f << "# comment\ntrain_teacher.steps = 2\n";
  }
  Session s;
  tiny(s.s, dir.path);
  REQUIRE(pd_session_load_config(s.s, (dir.path / "a.cfg").c_str()) == PD_OK);
  pd_teacher_report r{};
  REQUIRE(pd_train_teacher(s.s, &r) == PD_OK);
  CHECK(r.steps == 2);
  REQUIRE(pd_session_set(s.s, "train_teacher.steps", "1") == PD_OK);
  REQUIRE(pd_train_teacher(s.s, &r) == PD_OK);
  CHECK(r.steps == 1);
}

TEST_CASE("teacher and student through handles") {
  TempDir dir("models");
  Session s;
  tiny(s.s, dir.path);
  pd_teacher_report tr{};
  REQUIRE(pd_train_teacher(s.s, &tr) == PD_OK);
  CHECK(std::isfinite(tr.final_nll));
  CHECK(std::isfinite(tr.heldout_nll));
  pd_distill_report dr{};
  REQUIRE(pd_distill(s.s, &dr) == PD_OK);
  CHECK(std::string(dr.preset) == "kl_power");
  CHECK(dr.steps == 2);
  CHECK(dr.perceptual == 0.0);
  CHECK(dr.total == doctest::Approx(dr.kl + dr.power));

  char kind[16];
  uint64_t step = 0;
  REQUIRE(pd_checkpoint_inspect((dir.path / "teacher.pdwn").c_str(), kind, sizeof kind, &step) == PD_OK);
  CHECK(std::string(kind) == "teacher");
  CHECK(step == 3);
  char small[4];
  REQUIRE(pd_checkpoint_inspect((dir.path / "student.pdwn").c_str(), small, sizeof small, &step) == PD_OK);
  CHECK(std::string(small) == "stu");

  pd_teacher* t = nullptr;
  REQUIRE(pd_teacher_load((dir.path / "teacher.pdwn").c_str(), &t) == PD_OK);
  const size_t channels = pd_teacher_conditioning_channels(t);
  CHECK(channels == 11);
  CHECK(pd_teacher_receptive_field(t) > 1);
  const size_t frames = 2, divisor = 64, length = 128;
  std::vector<double> cond(channels * frames, 0.0);
  cond[0] = cond[1] = cond[(channels - 2) * frames] = cond[(channels - 2) * frames + 1] = 1.0;
  std::vector<double> a(length), b(length), c(length);
  REQUIRE(pd_teacher_sample(t, cond.data(), frames, divisor, length, 4, a.data()) == PD_OK);
  REQUIRE(pd_teacher_sample(t, cond.data(), frames, divisor, length, 4, b.data()) == PD_OK);
  REQUIRE(pd_teacher_sample(t, cond.data(), frames, divisor, length, 5, c.data()) == PD_OK);
  CHECK(a == b);
  CHECK(a != c);
  for (const double v : a) CHECK((v >= -1.0 && v <= 1.0));
  CHECK(pd_teacher_sample(t, cond.data(), 1, divisor, length, 4, a.data()) != PD_OK);
  CHECK(pd_teacher_sample(t, nullptr, frames, divisor, length, 4, a.data()) == PD_ERR_INVALID_ARGUMENT);
  pd_teacher_free(t);

  pd_student* st = nullptr;
  CHECK(pd_student_load((dir.path / "teacher.pdwn").c_str(), &st) == PD_ERR_CHECKPOINT_KIND);
  REQUIRE(pd_student_load((dir.path / "student.pdwn").c_str(), &st) == PD_OK);
  CHECK(pd_student_conditioning_channels(st) == channels);
  std::vector<double> z(length, 0.0);
  std::vector<double> x0(length), x1(length), x2(length);
  REQUIRE(pd_student_generate(st, cond.data(), frames, divisor, z.data(), length, 0, x0.data()) == PD_OK);
  REQUIRE(pd_student_generate(st, cond.data(), frames, divisor, z.data(), length, 99, x1.data()) == PD_OK);
  CHECK(x0 == x1);
  REQUIRE(pd_student_generate(st, cond.data(), frames, divisor, nullptr, length, 1, x1.data()) == PD_OK);
  REQUIRE(pd_student_generate(st, cond.data(), frames, divisor, nullptr, length, 1, x2.data()) == PD_OK);
  CHECK(x1 == x2);
  CHECK(x0 != x1);
  pd_student_free(st);
}

TEST_CASE("checkpoint corruption maps to distinct status codes") {
  TempDir dir("corrupt");
  Session s;
  tiny(s.s, dir.path);
  REQUIRE(pd_train_teacher(s.s, nullptr) == PD_OK);
  const std::vector<char> good = bytes(dir.path / "teacher.pdwn");
  const auto check = [&](std::vector<char> data, pd_status expected) {
    const fs::path p = dir.path / "bad.pdwn";
    std::ofstream(p, std::ios::binary).write(data.data(), static_cast<std::streamsize>(data.size()));
    pd_teacher* t = nullptr;
    CHECK(pd_teacher_load(p.c_str(), &t) == expected);
    CHECK(t == nullptr);
    CHECK(std::string(pd_last_error()).find("bad.pdwn") != std::string::npos);
  };
  auto v = good;
  v[0] = 'Q';
  check(v, PD_ERR_CHECKPOINT_MAGIC);
  v = good;
  v[5] = 1;
  check(v, PD_ERR_CHECKPOINT_VERSION);
  check(std::vector<char>(good.begin(), good.end() - 9), PD_ERR_CHECKPOINT_TRUNCATED);
  v = good;
  v[v.size() - 40] ^= 0x01;
  check(v, PD_ERR_CHECKPOINT_CHECKSUM);
}

TEST_CASE("wav writer and result arrays") {
  TempDir dir("wav");
  const double x[] = {0.0, 1.0, -1.0};
  REQUIRE(pd_write_wav((dir.path / "a.wav").c_str(), x, 3, 4000) == PD_OK);
  CHECK(fs::file_size(dir.path / "a.wav") == 50);
  const double y[] = {1.5};
  CHECK(pd_write_wav((dir.path / "b.wav").c_str(), y, 1, 4000) == PD_ERR_INVALID_ARGUMENT);

  Session s;
  tiny(s.s, dir.path);
  REQUIRE(pd_session_set(s.s, "demo_fib.lengths", "16") == PD_OK);
  REQUIRE(pd_session_set(s.s, "demo_fib.receptive_fields", "2,16") == PD_OK);
  size_t count = 0;
  REQUIRE(pd_demo_fib(s.s, nullptr, 0, &count) == PD_OK);
  REQUIRE(count >= 3);
  std::vector<pd_fib_row> rows(count);
  REQUIRE(pd_demo_fib(s.s, rows.data(), rows.size(), &count) == PD_OK);
  for (const pd_fib_row& r : rows) {
    CHECK(r.length == 16);
    if (r.model == PD_FIB_AUTOREGRESSIVE) CHECK(r.max_abs_error < 1e-9);
    if (r.model == PD_FIB_FEEDFORWARD && r.receptive_field == 2) CHECK(r.max_abs_error > 1e-6);
  }
}
