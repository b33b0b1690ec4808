#include "distill/losses.hpp"

#include <cmath>

#include "autodiff/ops.hpp"
#include "core/error.hpp"

namespace pdistill {

WaveNetTeacher::WaveNetTeacher(TeacherNet& net) : net_(net) { net_.set_frozen(true); }

MixtureTensors WaveNetTeacher::mixtures(const Tensor& x, const ConditioningSeq& c) const {
  return net_.forward(x, c);
}

LogisticTeacher::LogisticTeacher(double mu, double scale) : mu_(mu), log_s_(std::log(scale)) {
  require(scale > 0.0, "logistic teacher scale must be positive");
}

MixtureTensors LogisticTeacher::mixtures(const Tensor& x, const ConditioningSeq&) const {
  const Shape shape{x.dim(0), 1, x.dim(2)};
  return {Tensor(shape, 0.0), Tensor(shape, mu_), Tensor(shape, log_s_)};
}

Tensor student_entropy_term(const Tensor& s_tot) {
  return student_entropy_from_log_scale(ops::log(s_tot));
}

Tensor student_entropy_from_log_scale(const Tensor& log_s_tot) {
  if (log_s_tot.rank() != 3) {
    fail(ErrorCode::kShapeMismatch, "entropy term expects [B, 1, T], got " + shape_string(log_s_tot.shape()));
  }
  const double batch = static_cast<double>(log_s_tot.dim(0));
  const double len = static_cast<double>(log_s_tot.dim(2));
  return ops::add_scalar(ops::scale(ops::sum(log_s_tot), 1.0 / batch), 2.0 * len);
}

Tensor draw_inner_noise(std::size_t batch, std::size_t draws, std::size_t length, CounterRng& rng) {
  require(draws >= 1, "need at least one inner sample");
  std::vector<double> eps(batch * draws * length);
  for (double& v : eps) v = rng.logistic();
  return Tensor(Shape{batch, draws, length}, std::move(eps));
}

Tensor cross_entropy_with_noise(const StudentOutput& student, const TeacherDensity& teacher,
                                const ConditioningSeq& c, const Tensor& eps) {
  const Tensor& x = student.x;
  if (eps.rank() != 3 || eps.dim(0) != x.dim(0) || eps.dim(2) != x.dim(2)) {
    fail(ErrorCode::kShapeMismatch, "inner noise " + shape_string(eps.shape()) + " does not match sample " +
                                        shape_string(x.shape()));
  }
  const bool bounded = teacher.bounded();
  const Tensor prefix = bounded ? ops::clamp_straight_through(x, -1.0, 1.0) : x;
  const MixtureTensors mix = teacher.mixtures(prefix, c);
  Tensor inner = ops::add(student.mu_tot, ops::mul(student.s_tot, eps));
  if (bounded) inner = ops::clamp_straight_through(inner, -1.0, 1.0);
  const Tensor log_p = ops::mol_log_density(inner, mix);
  if (!ops::all_finite(log_p)) fail(ErrorCode::kNonFinite, "non-finite teacher log-density");
  const double norm = static_cast<double>(eps.dim(0) * eps.dim(1));
  return ops::scale(ops::sum(log_p), -1.0 / norm);
}

Tensor cross_entropy_term(const StudentOutput& student, const TeacherDensity& teacher,
                          const ConditioningSeq& c, std::size_t draws, CounterRng& rng) {
  const Tensor eps = draw_inner_noise(student.x.dim(0), draws, student.x.dim(2), rng);
  return cross_entropy_with_noise(student, teacher, c, eps);
}

namespace {

KlTerms kl_with_noise(const StudentOutput& student, const TeacherDensity& teacher, const ConditioningSeq& c,
                      const Tensor& eps, const Tensor& entropy) {
  KlTerms out;
  out.cross_entropy = cross_entropy_with_noise(student, teacher, c, eps);
  out.entropy = entropy;
  out.kl = ops::sub(out.cross_entropy, out.entropy);
  out.length = student.x.dim(2);
  return out;
}

}  // namespace

KlTerms kl_loss(const StudentOutput& student, const TeacherDensity& teacher, const ConditioningSeq& c,
                std::size_t draws, CounterRng& rng) {
  const Tensor eps = draw_inner_noise(student.x.dim(0), draws, student.x.dim(2), rng);
  return kl_with_noise(student, teacher, c, eps, student_entropy_from_log_scale(student.log_s_tot));
}

ContrastiveTerms contrastive_loss(const StudentOutput& student, const TeacherDensity& teacher,
                                  const ConditioningSeq& c1, const ConditioningSeq& c2, double gamma,
                                  std::size_t draws, CounterRng& rng) {
  require(gamma >= 0.0, "gamma must be non-negative");
  if (c1.empty() || c2.empty()) fail(ErrorCode::kInvalidArgument, "contrastive loss needs conditioning");
  if (c1.frames.shape() == c2.frames.shape()) {
    bool same = true;
    for (std::size_t i = 0; i < c1.frames.size() && same; ++i) same = c1.frames[i] == c2.frames[i];
    if (same) fail(ErrorCode::kInvalidArgument, "contrastive loss needs c1 != c2");
  }
  const Tensor eps = draw_inner_noise(student.x.dim(0), draws, student.x.dim(2), rng);
  const Tensor entropy = student_entropy_from_log_scale(student.log_s_tot);
  ContrastiveTerms out;
  out.matched = kl_with_noise(student, teacher, c1, eps, entropy);
  out.mismatched = kl_with_noise(student, teacher, c2, eps, entropy);
  out.value = ops::sub(out.matched.kl, ops::scale(out.mismatched.kl, gamma));
  return out;
}

}  // namespace pdistill
