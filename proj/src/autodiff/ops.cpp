#include "autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"

namespace pdistill::ops {

namespace internal {

bool should_track(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> value, const char* op, bool track,
                   BackwardFn backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (track) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    Tape::active()->record(node);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace internal

using internal::make_result;
using internal::should_track;
using NodePtr = std::shared_ptr<detail::Node>;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) fail(ErrorCode::kInvalidArgument, std::string(op) + ": undefined input");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) +
                                        ", got shape " + shape_string(t.shape()));
  }
}

// Output shape and per-operand strides (0 on broadcast axes).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
  bool b_scalar = false;
  bool a_scalar = false;
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Broadcast p;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    p.out = sa;
    p.same = true;
    return p;
  }
  if (b.size() == 1) {
    p.out = sa;
    p.b_scalar = true;
    return p;
  }
  if (a.size() == 1) {
    p.out = sb;
    p.a_scalar = true;
    return p;
  }
  if (sa.size() != sb.size()) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": cannot broadcast " + shape_string(sa) +
                                        " with " + shape_string(sb));
  }
  const auto ta = strides_of(sa);
  const auto tb = strides_of(sb);
  p.out.resize(sa.size());
  p.stride_a.resize(sa.size());
  p.stride_b.resize(sa.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i] && sa[i] != 1 && sb[i] != 1) {
      fail(ErrorCode::kShapeMismatch, std::string(op) + ": cannot broadcast " + shape_string(sa) +
                                          " with " + shape_string(sb));
    }
    p.out[i] = std::max(sa[i], sb[i]);
    p.stride_a[i] = sa[i] == 1 ? 0 : ta[i];
    p.stride_b[i] = sb[i] == 1 ? 0 : tb[i];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_pair(const Broadcast& p, F&& f) {
  const std::size_t n = shape_size(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (p.b_scalar) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, std::size_t{0});
    return;
  }
  if (p.a_scalar) {
    for (std::size_t i = 0; i < n; ++i) f(i, std::size_t{0}, i);
    return;
  }
  const std::size_t rank = p.out.size();
  const std::size_t inner = p.out[rank - 1];
  const std::size_t ia_step = p.stride_a[rank - 1];
  const std::size_t ib_step = p.stride_b[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, oa + j * ia_step, ob + j * ib_step);
    // Advance the outer multi-index.
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      oa += p.stride_a[d];
      ob += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.stride_a[d] * idx[d];
      ob -= p.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

Tensor binary(Elementwise kind, const Tensor& a, const Tensor& b) {
  const char* name = kind == Elementwise::kAdd ? "add" : kind == Elementwise::kSub ? "sub" : "mul";
  require_defined(a, name);
  require_defined(b, name);
  Broadcast plan = plan_broadcast(a, b, name);
  std::vector<double> out(shape_size(plan.out));
  const double* av = a.data().data();
  const double* bv = b.data().data();
  switch (kind) {
    case Elementwise::kAdd:
      for_each_pair(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case Elementwise::kSub:
      for_each_pair(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    default:
      for_each_pair(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
  }
  const bool track = should_track({&a, &b});
  NodePtr na = a.node(), nb = b.node();
  Shape out_shape = plan.out;
  return make_result(std::move(out_shape), std::move(out), name, track,
                     [na, nb, plan = std::move(plan), kind](detail::Node& self) {
                       const double* g = self.grad.data();
                       double* ga = na->requires_grad ? na->ensure_grad().data() : nullptr;
                       double* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
                       const double* av = na->value.data();
                       const double* bv = nb->value.data();
                       for_each_pair(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                         switch (kind) {
                           case Elementwise::kAdd:
                             if (ga) ga[i] += g[o];
                             if (gb) gb[j] += g[o];
                             break;
                           case Elementwise::kSub:
                             if (ga) ga[i] += g[o];
                             if (gb) gb[j] -= g[o];
                             break;
                           default:
                             if (ga) ga[i] += g[o] * bv[j];
                             if (gb) gb[j] += g[o] * av[i];
                             break;
                         }
                       });
                     });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Unary op with derivative expressed through (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(a, name);
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const bool track = should_track({&a});
  NodePtr na = a.node();
  return make_result(a.shape(), std::move(out), name, track, [na, deriv](detail::Node& self) {
    if (!na->requires_grad) return;
    auto& ga = na->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(na->value[i], self.value[i]);
  });
}

}  // namespace

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case Elementwise::kAdd:
    case Elementwise::kSub:
    case Elementwise::kMul:
      return binary(kind, a, b);
    case Elementwise::kSigmoid:
      return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
    case Elementwise::kTanh:
      return unary(a, "tanh", [](double x) { return std::tanh(x); },
                   [](double, double y) { return 1.0 - y * y; });
    case Elementwise::kExp:
      return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    case Elementwise::kLog:
      return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
    case Elementwise::kNeg:
      return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
  }
  fail(ErrorCode::kInternal, "unknown elementwise kind");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::kMul, a, b); }
Tensor sigmoid(const Tensor& a) { return elementwise(Elementwise::kSigmoid, a); }
Tensor tanh(const Tensor& a) { return elementwise(Elementwise::kTanh, a); }
Tensor exp(const Tensor& a) { return elementwise(Elementwise::kExp, a); }
Tensor log(const Tensor& a) { return elementwise(Elementwise::kLog, a); }
Tensor neg(const Tensor& a) { return elementwise(Elementwise::kNeg, a); }

Tensor relu(const Tensor& a) {
  // NaN passes through so corrupted weights surface downstream.
  return unary(a, "relu", [](double x) { return (x > 0.0 || std::isnan(x)) ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary(a, "softplus", stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, "add_scalar", [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor clamp_straight_through(const Tensor& a, double lo, double hi) {
  return unary(a, "clamp_st", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [](double, double) { return 1.0; });
}

Tensor causal_conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t dilation) {
  require_rank(input, 3, "causal_conv1d");
  require_rank(weight, 3, "causal_conv1d");
  if (dilation == 0) fail(ErrorCode::kInvalidArgument, "causal_conv1d: dilation must be positive");
  const std::size_t batch = input.dim(0), cin = input.dim(1), len = input.dim(2);
  const std::size_t cout = weight.dim(0), taps = weight.dim(2);
  if (weight.dim(1) != cin) {
    fail(ErrorCode::kShapeMismatch, "causal_conv1d: input " + shape_string(input.shape()) +
                                        " does not match weight " + shape_string(weight.shape()));
  }
  if (taps == 0) fail(ErrorCode::kInvalidArgument, "causal_conv1d: filter size must be >= 1");
  if (bias.defined() && bias.size() != cout) {
    fail(ErrorCode::kShapeMismatch, "causal_conv1d: bias " + shape_string(bias.shape()) +
                                        " does not match " + std::to_string(cout) + " outputs");
  }

  std::vector<double> out(batch * cout * len, 0.0);
  const double* x = input.data().data();
  const double* w = weight.data().data();
  // Per-tap contiguous [Cout, Cin] slices of the weight.
  std::vector<RowMat> tap_weights(taps, RowMat(cout, cin));
  for (std::size_t k = 0; k < taps; ++k) {
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t i = 0; i < cin; ++i) tap_weights[k](o, i) = w[(o * cin + i) * taps + k];
    }
  }
  for (std::size_t k = 0; k < taps; ++k) {
    const std::size_t shift = (taps - 1 - k) * dilation;
    if (shift >= len) continue;
    const auto cols = static_cast<Eigen::Index>(len - shift);
    for (std::size_t b = 0; b < batch; ++b) {
      StridedMap o(out.data() + b * cout * len + shift, cout, cols, Eigen::OuterStride<>(len));
      ConstStridedMap in(x + b * cin * len, cin, cols, Eigen::OuterStride<>(len));
      o.noalias() += tap_weights[k] * in;
    }
  }
  if (bias.defined()) {
    const double* bv = bias.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        double* row = out.data() + (b * cout + o) * len;
        for (std::size_t t = 0; t < len; ++t) row[t] += bv[o];
      }
    }
  }

  const bool track = should_track({&input, &weight, &bias});
  NodePtr nx = input.node(), nw = weight.node(), nb = bias.node();
  return make_result(
      Shape{batch, cout, len}, std::move(out), "causal_conv1d", track,
      [nx, nw, nb, batch, cin, cout, len, taps, dilation,
       tap_weights = std::move(tap_weights)](detail::Node& self) {
        const double* g = self.grad.data();
        if (nx->requires_grad) {
          double* gx = nx->ensure_grad().data();
          for (std::size_t k = 0; k < taps; ++k) {
            const std::size_t shift = (taps - 1 - k) * dilation;
            if (shift >= len) continue;
            const auto cols = static_cast<Eigen::Index>(len - shift);
            for (std::size_t b = 0; b < batch; ++b) {
              StridedMap gin(gx + b * cin * len, cin, cols, Eigen::OuterStride<>(len));
              ConstStridedMap go(g + b * cout * len + shift, cout, cols, Eigen::OuterStride<>(len));
              gin.noalias() += tap_weights[k].transpose() * go;
            }
          }
        }
        if (nw->requires_grad) {
          double* gw = nw->ensure_grad().data();
          RowMat acc(cout, cin);
          for (std::size_t k = 0; k < taps; ++k) {
            const std::size_t shift = (taps - 1 - k) * dilation;
            if (shift >= len) continue;
            const auto cols = static_cast<Eigen::Index>(len - shift);
            acc.setZero();
            for (std::size_t b = 0; b < batch; ++b) {
              ConstStridedMap go(g + b * cout * len + shift, cout, cols, Eigen::OuterStride<>(len));
              ConstStridedMap in(nx->value.data() + b * cin * len, cin, cols, Eigen::OuterStride<>(len));
              acc.noalias() += go * in.transpose();
            }
            for (std::size_t o = 0; o < cout; ++o) {
              for (std::size_t i = 0; i < cin; ++i) gw[(o * cin + i) * taps + k] += acc(o, i);
            }
          }
        }
        if (nb && nb->requires_grad) {
          double* gb = nb->ensure_grad().data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              const double* row = g + (b * cout + o) * len;
              double s = 0.0;
              for (std::size_t t = 0; t < len; ++t) s += row[t];
              gb[o] += s;
            }
          }
        }
      });
}

Tensor shift_right(const Tensor& x) {
  require_defined(x, "shift_right");
  if (x.rank() == 0) fail(ErrorCode::kShapeMismatch, "shift_right: scalar input");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / std::max<std::size_t>(len, 1);
  const auto in = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 1; t < len; ++t) out[r * len + t] = in[r * len + t - 1];
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(x.shape(), std::move(out), "shift_right", track, [nx, rows, len](detail::Node& self) {
    if (!nx->requires_grad) return;
    auto& gx = nx->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 1; t < len; ++t) gx[r * len + t - 1] += self.grad[r * len + t];
    }
  });
}

Tensor upsample_repeat(const Tensor& x, std::size_t factor, std::size_t length) {
  require_rank(x, 3, "upsample_repeat");
  if (factor == 0) fail(ErrorCode::kInvalidArgument, "upsample_repeat: factor must be positive");
  const std::size_t rows = x.dim(0) * x.dim(1), frames = x.dim(2);
  if (frames * factor < length) {
    fail(ErrorCode::kShapeMismatch, "upsample_repeat: " + std::to_string(frames) + " frames x " +
                                        std::to_string(factor) + " cannot cover " +
                                        std::to_string(length) + " samples");
  }
  const auto in = x.data();
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < length; ++t) out[r * length + t] = in[r * frames + t / factor];
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(Shape{x.dim(0), x.dim(1), length}, std::move(out), "upsample_repeat", track,
                     [nx, rows, frames, factor, length](detail::Node& self) {
                       if (!nx->requires_grad) return;
                       auto& gx = nx->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t t = 0; t < length; ++t) {
                           gx[r * frames + t / factor] += self.grad[r * length + t];
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 3, "slice_channels");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (begin >= end || end > ch) {
    fail(ErrorCode::kShapeMismatch, "slice_channels: range [" + std::to_string(begin) + "," +
                                        std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t n = end - begin;
  const auto in = x.data();
  std::vector<double> out(batch * n * len);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(in.data() + (b * ch + begin) * len, n * len, out.data() + b * n * len);
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(Shape{batch, n, len}, std::move(out), "slice_channels", track,
                     [nx, batch, ch, len, begin, n](detail::Node& self) {
                       if (!nx->requires_grad) return;
                       auto& gx = nx->ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* g = self.grad.data() + b * n * len;
                         double* dst = gx.data() + (b * ch + begin) * len;
                         for (std::size_t i = 0; i < n * len; ++i) dst[i] += g[i];
                       }
                     });
}

Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end) {
  require_defined(x, "slice_time");
  if (x.rank() == 0) fail(ErrorCode::kShapeMismatch, "slice_time: scalar input");
  const std::size_t len = x.shape().back();
  if (begin >= end || end > len) {
    fail(ErrorCode::kShapeMismatch, "slice_time: range [" + std::to_string(begin) + "," +
                                        std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / len, n = end - begin;
  Shape shape = x.shape();
  shape.back() = n;
  const auto in = x.data();
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(in.data() + r * len + begin, n, out.data() + r * n);
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(std::move(shape), std::move(out), "slice_time", track,
                     [nx, rows, len, begin, n](detail::Node& self) {
                       if (!nx->requires_grad) return;
                       auto& gx = nx->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t i = 0; i < n; ++i) gx[r * len + begin + i] += self.grad[r * n + i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_size(shape) != x.size()) {
    fail(ErrorCode::kShapeMismatch,
         "reshape: " + shape_string(x.shape()) + " cannot become " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(std::move(shape), std::move(out), "reshape", track, [nx](detail::Node& self) {
    if (!nx->requires_grad) return;
    auto& gx = nx->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorCode::kShapeMismatch,
         "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  using ConstMap = Eigen::Map<const RowMat>;
  using Map = Eigen::Map<RowMat>;
  std::vector<double> out(m * n, 0.0);
  Map(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  const bool track = should_track({&a, &b});
  NodePtr na = a.node(), nb = b.node();
  return make_result(Shape{m, n}, std::move(out), "matmul", track, [na, nb, m, k, n](detail::Node& self) {
    ConstMap g(self.grad.data(), m, n);
    if (na->requires_grad) {
      Map(na->ensure_grad().data(), m, k).noalias() += g * ConstMap(nb->value.data(), k, n).transpose();
    }
    if (nb->requires_grad) {
      Map(nb->ensure_grad().data(), k, n).noalias() += ConstMap(na->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (const double v : x.data()) s += v;
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(Shape{}, {s}, "sum", track, [nx](detail::Node& self) {
    if (!nx->requires_grad) return;
    auto& gx = nx->ensure_grad();
    const double g = self.grad[0];
    for (double& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  if (x.size() == 0) fail(ErrorCode::kInvalidArgument, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

namespace {

struct AxisLayout {
  std::size_t outer, extent, inner;
};

AxisLayout axis_layout(const Tensor& x, std::size_t axis, const char* op) {
  require_defined(x, op);
  if (axis >= x.rank()) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": axis " + std::to_string(axis) +
                                        " out of range for " + shape_string(x.shape()));
  }
  AxisLayout l{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) l.inner *= x.dim(i);
  return l;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const AxisLayout l = axis_layout(x, axis, "sum_axis");
  Shape shape = x.shape();
  shape[axis] = 1;
  const auto in = x.data();
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t e = 0; e < l.extent; ++e) {
      const double* src = in.data() + (o * l.extent + e) * l.inner;
      double* dst = out.data() + o * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] += src[i];
    }
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(std::move(shape), std::move(out), "sum_axis", track, [nx, l](detail::Node& self) {
    if (!nx->requires_grad) return;
    auto& gx = nx->ensure_grad();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t e = 0; e < l.extent; ++e) {
        double* dst = gx.data() + (o * l.extent + e) * l.inner;
        const double* g = self.grad.data() + o * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const std::size_t extent = x.dim(axis);
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(extent));
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
  const AxisLayout l = axis_layout(x, axis, "logsumexp");
  if (l.extent == 0) fail(ErrorCode::kInvalidArgument, "logsumexp over an empty axis");
  Shape shape = x.shape();
  shape[axis] = 1;
  const auto in = x.data();
  std::vector<double> out(l.outer * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < l.extent; ++e) m = std::max(m, in[(o * l.extent + e) * l.inner + i]);
      double s = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) s += std::exp(in[(o * l.extent + e) * l.inner + i] - m);
      out[o * l.inner + i] = m + std::log(s);
    }
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(std::move(shape), std::move(out), "logsumexp", track, [nx, l](detail::Node& self) {
    if (!nx->requires_grad) return;
    auto& gx = nx->ensure_grad();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const double lse = self.value[o * l.inner + i];
        const double g = self.grad[o * l.inner + i];
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t idx = (o * l.extent + e) * l.inner + i;
          gx[idx] += g * std::exp(nx->value[idx] - lse);
        }
      }
    }
  });
}

Tensor gram(const Tensor& x) {
  require_rank(x, 3, "gram");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len == 0) fail(ErrorCode::kInvalidArgument, "gram: empty time axis");
  using ConstMap = Eigen::Map<const RowMat>;
  using Map = Eigen::Map<RowMat>;
  const double inv_t = 1.0 / static_cast<double>(len);
  std::vector<double> out(batch * ch * ch);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMap xb(x.data().data() + b * ch * len, ch, len);
    Map(out.data() + b * ch * ch, ch, ch).noalias() = inv_t * (xb * xb.transpose());
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(Shape{batch, ch, ch}, std::move(out), "gram", track,
                     [nx, batch, ch, len, inv_t](detail::Node& self) {
                       if (!nx->requires_grad) return;
                       auto& gx = nx->ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                         ConstMap g(self.grad.data() + b * ch * ch, ch, ch);
                         ConstMap xb(nx->value.data() + b * ch * len, ch, len);
                         Map(gx.data() + b * ch * len, ch, len).noalias() +=
                             inv_t * ((g + g.transpose()) * xb);
                       }
                     });
}

Tensor frame_signal(const Tensor& x, std::size_t window, std::size_t hop) {
  require_rank(x, 2, "frame_signal");
  if (window == 0 || hop == 0) fail(ErrorCode::kInvalidArgument, "frame_signal: window and hop must be positive");
  const std::size_t batch = x.dim(0), len = x.dim(1);
  if (len < window) {
    fail(ErrorCode::kInvalidArgument, "frame_signal: signal of length " + std::to_string(len) +
                                          " is shorter than window " + std::to_string(window));
  }
  const std::size_t frames = 1 + (len - window) / hop;
  const auto in = x.data();
  std::vector<double> out(batch * frames * window);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < frames; ++f) {
      std::copy_n(in.data() + b * len + f * hop, window, out.data() + (b * frames + f) * window);
    }
  }
  const bool track = should_track({&x});
  NodePtr nx = x.node();
  return make_result(Shape{batch, frames, window}, std::move(out), "frame_signal", track,
                     [nx, batch, len, frames, window, hop](detail::Node& self) {
                       if (!nx->requires_grad) return;
                       auto& gx = nx->ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t f = 0; f < frames; ++f) {
                           const double* g = self.grad.data() + (b * frames + f) * window;
                           double* dst = gx.data() + b * len + f * hop;
                           for (std::size_t i = 0; i < window; ++i) dst[i] += g[i];
                         }
                       }
                     });
}

bool all_finite(const Tensor& x) {
  for (const double v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_finite(const Tensor& x, std::string_view what) {
  if (!all_finite(x)) fail(ErrorCode::kNonFinite, "non-finite values in " + std::string(what));
}

}  // namespace pdistill::ops
