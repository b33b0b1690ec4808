#include <cmath>

#include "doctest.h"

#include "autodiff/adam.hpp"
#include "autodiff/ops.hpp"
#include "core/error.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "teacher/teacher.hpp"

using namespace pdistill;

namespace {

TeacherConfig small_config(std::size_t cond = 3) {
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

ConditioningSeq random_conditioning(std::size_t batch, std::size_t channels, std::size_t frames,
                                    std::size_t divisor, std::uint64_t seed) {
  CounterRng rng(seed, 5);
  std::vector<double> v(batch * channels * frames);
  for (double& x : v) x = 2.0 * rng.uniform_open() - 1.0;
  return {Tensor(Shape{batch, channels, frames}, std::move(v)), divisor};
}

Tensor random_wave(std::size_t batch, std::size_t len, std::uint64_t seed) {
  CounterRng rng(seed, 6);
  std::vector<double> v(batch * len);
  for (double& x : v) x = 0.9 * (2.0 * rng.uniform_open() - 1.0);
  return Tensor(Shape{batch, 1, len}, std::move(v));
}

std::vector<double> head_values(const MixtureTensors& m) {
  std::vector<double> out;
  for (const Tensor* t : {&m.logits, &m.mus, &m.log_ss}) out.insert(out.end(), t->data().begin(), t->data().end());
  return out;
}

}  // namespace

TEST_CASE("receptive field closed form") {
  TeacherConfig c;
  c.num_stacks = 1;
  c.layers_per_stack = 1;
  c.filter_size = 2;
  CHECK(receptive_field(c) == 2);
  c.num_stacks = 3;
  c.layers_per_stack = 10;
  c.filter_size = 3;
  CHECK(receptive_field(c) == 6139);
  std::size_t previous = 0;
  for (std::size_t l = 1; l <= 12; ++l) {
    c.layers_per_stack = l;
    const std::size_t field = receptive_field(c);
    CHECK(field > previous);
    if (previous > 0) CHECK(field >= 2 * previous - 1);
    previous = field;
  }
  TeacherConfig desk;
  CHECK(receptive_field(desk) == 253);
}

TEST_CASE("receptive field equals the reach of a Jacobian probe") {
  const TeacherConfig cfg = small_config(0);
  const TeacherNet net(cfg, 3);
  const std::size_t field = receptive_field(cfg);  // 1 + 2*2*7 = 29
  CHECK(field == 29);
  Tensor x = random_wave(1, 80, 1);
  x.set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  const MixtureTensors m = net.forward(x, {});
  tape.backward(ops::sum(ops::slice_time(m.mus, 70, 71)));
  // Position 70 sees x[70 - field .. 69].
  for (std::size_t u = 0; u < 80; ++u) {
    const bool inside = u + field >= 70 && u < 70;
    CAPTURE(u);
    if (inside) {
      CHECK(x.grad()[u] != 0.0);
    } else {
      CHECK(x.grad()[u] == 0.0);
    }
  }
}

TEST_CASE("teacher config validation and round trip") {
  TeacherConfig bad;
  bad.gate_channels = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  const TeacherConfig cfg = small_config();
  KeyValues kv;
  cfg.store(kv, "teacher.");
  const TeacherConfig back = TeacherConfig::load(kv, "teacher.");
  CHECK(back.residual_channels == cfg.residual_channels);
  CHECK(back.gate_channels == cfg.gate_channels);
  CHECK(back.conditioning_channels == cfg.conditioning_channels);
  CHECK(back.num_mixtures == cfg.num_mixtures);
}

TEST_CASE("forward shapes") {
  TeacherConfig cfg = small_config();
  cfg.num_mixtures = 10;
  const TeacherNet net(cfg, 1);
  const MixtureTensors m = net.forward(random_wave(2, 64, 2), random_conditioning(2, 3, 8, 8, 1));
  for (const Tensor* t : {&m.logits, &m.mus, &m.log_ss}) CHECK(t->shape() == Shape{2, 10, 64});
  for (const double v : m.log_ss.data()) CHECK(v >= kMinLogScale);
}

TEST_CASE("parameter count is a function of the config") {
  const TeacherConfig cfg = small_config();
  const std::size_t r = 8, g = 10, h = 5, s = 6, k = 3, cc = 3, f = 3, layers = 6;
  const std::size_t expected = (r + r) + layers * (g * r * f + g + g * cc + r * h + r + s * h + s) +
                               (s * s + s) + (3 * k * s + 3 * k);
  const TeacherNet a(cfg, 1), b(cfg, 2);
  CHECK(a.parameters().scalar_count() == expected);
  CHECK(a.parameters().names() == b.parameters().names());
  CHECK(b.parameters().scalar_count() == expected);
}

TEST_CASE("teacher output at t = 0 ignores the waveform") {
  const TeacherNet net(small_config(), 4);
  const ConditioningSeq c = random_conditioning(1, 3, 4, 8, 2);
  const MixtureTensors a = net.forward(random_wave(1, 32, 3), c);
  const MixtureTensors b = net.forward(random_wave(1, 32, 4), c);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.logits[i * 32] == b.logits[i * 32]);
    CHECK(a.mus[i * 32] == b.mus[i * 32]);
    CHECK(a.log_ss[i * 32] == b.log_ss[i * 32]);
  }
}

TEST_CASE("perturbing x at t changes the head only after t") {
  const TeacherNet net(small_config(), 5);
  const ConditioningSeq c = random_conditioning(1, 3, 6, 8, 3);
  const Tensor x = random_wave(1, 48, 5);
  const auto base = head_values(net.forward(x, c));
  CounterRng rng(5, 9);
  for (int probe = 0; probe < 6; ++probe) {
    const std::size_t t = rng.below(48);
    Tensor bumped = x.clone();
    bumped.mutable_data()[t] = bumped[t] > 0 ? bumped[t] - 0.3 : bumped[t] + 0.3;
    const auto moved = head_values(net.forward(bumped, c));
    bool later_changed = t + 1 >= 48;
    for (std::size_t block = 0; block < moved.size() / 48; ++block)
      for (std::size_t u = 0; u < 48; ++u) {
        const std::size_t i = block * 48 + u;
        if (u <= t) CHECK(moved[i] == base[i]);
        if (u > t && moved[i] != base[i]) later_changed = true;
      }
    CHECK(later_changed);
  }
}

TEST_CASE("strict predictive causality via the tape") {
  const TeacherNet net(small_config(), 6);
  const ConditioningSeq c = random_conditioning(1, 3, 5, 8, 4);
  Tensor x = random_wave(1, 40, 6);
  x.set_requires_grad(true);
  for (const std::size_t t : {0, 7, 21, 39}) {
    x.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    const MixtureTensors m = net.forward(x, c);
    const Tensor probe = ops::add(ops::add(ops::sum(ops::slice_time(m.logits, t, t + 1)),
                                           ops::sum(ops::slice_time(m.mus, t, t + 1))),
                                  ops::sum(ops::slice_time(m.log_ss, t, t + 1)));
    tape.backward(probe);
    for (std::size_t u = t; u < 40; ++u) CHECK(x.grad()[u] == 0.0);
  }
}

TEST_CASE("conditioning beyond t does not reach the head at t") {
  const TeacherNet net(small_config(), 7);
  const Tensor x = random_wave(1, 32, 7);
  ConditioningSeq c = random_conditioning(1, 3, 4, 8, 5);
  const auto base = head_values(net.forward(x, c));
  ConditioningSeq changed{c.frames.clone(), 8};
  for (std::size_t ch = 0; ch < 3; ++ch) changed.frames.mutable_data()[ch * 4 + 2] += 1.0;  // frame 2 = t 16..23
  const auto moved = head_values(net.forward(x, changed));
  for (std::size_t block = 0; block < moved.size() / 32; ++block)
    for (std::size_t u = 0; u < 16; ++u) CHECK(moved[block * 32 + u] == base[block * 32 + u]);
}

TEST_CASE("forward rejects out-of-range input and bad conditioning") {
  const TeacherNet net(small_config(), 8);
  const ConditioningSeq c = random_conditioning(1, 3, 2, 8, 6);
  Tensor x(Shape{1, 1, 16}, 0.0);
  x.mutable_data()[3] = 1.5;
  CHECK_THROWS_AS(net.forward(x, c), Error);
  CHECK_THROWS_AS(net.forward(Tensor(Shape{1, 1, 17}), c), Error);
  CHECK_THROWS_AS(net.forward(Tensor(Shape{1, 1, 16}), ConditioningSeq{}), Error);
  CHECK_NOTHROW(net.forward(Tensor(Shape{1, 1, 16}, 1.0), c));
}

TEST_CASE("gated residual layer contracts") {
  TeacherConfig cfg = small_config();
  TeacherNet net(cfg, 9);
  const Tensor x(Shape{2, 8, 20}, 0.25);
  const Tensor cu(Shape{2, 3, 20}, 0.5);
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    const auto out = net.gated_residual_layer(x, cu, l);
    CHECK(out.residual.shape() == x.shape());
    CHECK(out.skip.shape() == Shape{2, 6, 20});
  }
  for (auto& p : net.parameters())
    for (double& v : p.tensor.mutable_data()) v = 0.0;
  const auto zero = net.gated_residual_layer(x, cu, 2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(zero.residual[i] == x[i]);
  for (const double v : zero.skip.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(net.gated_residual_layer(x, Tensor(Shape{2, 3, 19}), 0), Error);
}

TEST_CASE("gated residual skip output is causal") {
  const TeacherNet net(small_config(), 10);
  CounterRng rng(10, 1);
  std::vector<double> v(8 * 30);
  for (double& a : v) a = rng.uniform_open() - 0.5;
  const Tensor x(Shape{1, 8, 30}, v);
  const Tensor cu(Shape{1, 3, 30}, 0.1);
  const auto base = net.gated_residual_layer(x, cu, 2);
  Tensor bumped = x.clone();
  bumped.mutable_data()[3 * 30 + 17] += 0.4;
  const auto moved = net.gated_residual_layer(bumped, cu, 2);
  for (std::size_t ch = 0; ch < 6; ++ch)
    for (std::size_t t = 0; t < 17; ++t) CHECK(moved.skip[ch * 30 + t] == base.skip[ch * 30 + t]);
}

TEST_CASE("teacher gradients match finite differences") {
  TeacherNet net(small_config(), 11);
  const ConditioningSeq c = random_conditioning(2, 3, 3, 8, 7);
  const DiscretizationSpec d{8};
  std::vector<double> v(2 * 24);
  CounterRng rng(11, 2);
  for (double& a : v) a = d.center(rng.below(256));
  const Tensor x(Shape{2, 1, 24}, v);
  const auto result =
      pdistill::testing::check_parameter_gradients(net.parameters(), [&] { return net.nll(x, c); }, 20, rng);
  INFO(result.worst);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("duplicate batch rows give identical per-row NLL") {
  const TeacherNet net(small_config(0), 12);
  const DiscretizationSpec d{8};
  CounterRng rng(12, 1);
  std::vector<double> row(40);
  for (double& a : row) a = d.center(rng.below(256));
  std::vector<double> both = row;
  both.insert(both.end(), row.begin(), row.end());
  const Tensor nll = net.nll_per_timestep(Tensor(Shape{2, 1, 40}, both), {});
  for (std::size_t t = 0; t < 40; ++t) CHECK(nll[t] == nll[40 + t]);
  CHECK_THROWS_AS(net.nll(Tensor(Shape{1, 1, 4}, 0.001), {}), Error);
}

TEST_CASE("brief training on uniform 8-bit noise reaches ln 256") {
  TeacherConfig cfg = small_config(0);
  TeacherNet net(cfg, 13);
  Adam adam(net.parameters(), {.lr = 3e-3});
  const DiscretizationSpec d{8};
  CounterRng rng(13, 1);
  auto batch = [&] {
    std::vector<double> v(8 * 128);
    for (double& a : v) a = d.center(rng.below(256));
    return Tensor(Shape{8, 1, 128}, std::move(v));
  };
  for (int step = 0; step < 300; ++step) {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(net.nll(batch(), {}));
    adam.step();
  }
  double held_out = 0.0;
  for (int i = 0; i < 8; ++i) held_out += net.nll(batch(), {}).item() / 8.0;
  CHECK(std::abs(held_out - std::log(256.0)) < 0.1);
}

TEST_CASE("cached ancestral sampling matches naive recomputation") {
  const TeacherConfig cfg = small_config();
  const TeacherNet net(cfg, 14);
  for (const std::uint64_t seed : {1, 2, 3}) {
    const ConditioningSeq c = random_conditioning(1, 3, 16, 8, seed);
    CounterRng fast(seed, stream_id(StreamPurpose::kAncestral, 0));
    CounterRng slow(seed, stream_id(StreamPurpose::kAncestral, 0));
    const auto a = ancestral_sample(net, c, 128, fast);
    const auto b = pdistill::testing::naive_ancestral_sample(net, c, 128, slow);
    REQUIRE(a.size() == 128);
    double worst = 0.0;
    for (std::size_t t = 0; t < 128; ++t) worst = std::max(worst, std::abs(a[t] - b[t]));
    CHECK(worst < 1e-10);
    CHECK(fast.counter() == slow.counter());
  }
}

TEST_CASE("single-step ancestral sample is a draw from the t = 0 head") {
  const TeacherNet net(small_config(0), 15);
  CounterRng a(3, 1), b(3, 1);
  const double x = ancestral_sample(net, {}, 1, a)[0];
  const MixtureTensors m = net.forward(Tensor(Shape{1, 1, 1}, 0.0), {});
  const DiscretizationSpec d{8};
  CHECK(std::abs(x - mol_sample(m.at(0, 0), b, &d)) < 1e-12);
}

TEST_CASE("trained teacher approaches the generator's NLL") {
  // Data drawn bin by bin from a small random teacher; a fresh net of the
  // same shape is fitted by maximum likelihood.
  TeacherConfig cfg = small_config(0);
  cfg.num_stacks = 1;
  cfg.layers_per_stack = 2;
  cfg.residual_channels = 6;
  cfg.gate_channels = 8;
  cfg.num_mixtures = 2;
  const TeacherNet generator(cfg, 101);
  auto make_data = [&](std::size_t clips, std::uint64_t stream) {
    std::vector<double> v;
    CounterRng rng(77, stream);
    for (std::size_t i = 0; i < clips; ++i) {
      const auto clip = pdistill::testing::naive_ancestral_sample(generator, {}, 48, rng, true);
      v.insert(v.end(), clip.begin(), clip.end());
    }
    return Tensor(Shape{clips, 1, 48}, std::move(v));
  };
  const Tensor train = make_data(256, 1), held = make_data(64, 2);
  const double target = generator.nll(held, {}).item();

  TeacherNet fresh(cfg, 202);
  Adam adam(fresh.parameters(), {.lr = 3e-3});
  CounterRng pick(5, 5);
  for (int step = 0; step < 1500; ++step) {
    std::vector<double> rows;
    for (int b = 0; b < 16; ++b) {
      const std::size_t r = pick.below(256);
      rows.insert(rows.end(), train.data().begin() + r * 48, train.data().begin() + (r + 1) * 48);
    }
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(fresh.nll(Tensor(Shape{16, 1, 48}, rows), {}));
    adam.step();
  }
  const double fitted = fresh.nll(held, {}).item();
  CAPTURE(target);
  CAPTURE(fitted);
  CHECK(std::abs(fitted - target) < 0.1);
}
