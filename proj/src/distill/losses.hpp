#pragma once

#include <cstddef>

#include "autodiff/tensor.hpp"
#include "core/rng.hpp"
#include "distributions/distributions.hpp"
#include "student/student.hpp"
#include "teacher/teacher.hpp"

namespace pdistill {

// The density the student is distilled into. Values returned for position t
// may depend on x only through x_<t.
class TeacherDensity {
 public:
  virtual ~TeacherDensity() = default;
  virtual MixtureTensors mixtures(const Tensor& x, const ConditioningSeq& c) const = 0;
  // When true, inputs and inner samples are clamped to [-1, 1] first.
  virtual bool bounded() const = 0;
};

// A frozen WaveNet teacher. Freezes the net on construction.
class WaveNetTeacher final : public TeacherDensity {
 public:
  explicit WaveNetTeacher(TeacherNet& net);
  MixtureTensors mixtures(const Tensor& x, const ConditioningSeq& c) const override;
  bool bounded() const override { return true; }
  const TeacherNet& net() const { return net_; }

 private:
  TeacherNet& net_;
};

// Independent Logistic(mu, s) at every timestep, regardless of x and c.
class LogisticTeacher final : public TeacherDensity {
 public:
  explicit LogisticTeacher(double mu = 0.0, double scale = 1.0);
  MixtureTensors mixtures(const Tensor& x, const ConditioningSeq& c) const override;
  bool bounded() const override { return false; }

 private:
  double mu_, log_s_;
};

// Batch mean of sum_t ln s_tot + 2T.
Tensor student_entropy_term(const Tensor& s_tot);
// Same quantity from the summed log-scales, avoiding exp/log round trips.
Tensor student_entropy_from_log_scale(const Tensor& log_s_tot);

// Inner-sample noise eps [B, M, T] of standard logistic draws.
Tensor draw_inner_noise(std::size_t batch, std::size_t draws, std::size_t length, CounterRng& rng);

// Batch mean of -sum_t (1/M) sum_m ln p_T(mu_tot + s_tot eps_m | x_<t), with
// the teacher evaluated once on the student's own sample x.
Tensor cross_entropy_with_noise(const StudentOutput& student, const TeacherDensity& teacher,
                                const ConditioningSeq& c, const Tensor& eps);
Tensor cross_entropy_term(const StudentOutput& student, const TeacherDensity& teacher,
                          const ConditioningSeq& c, std::size_t draws, CounterRng& rng);

// All three are sums over time, averaged over the batch.
struct KlTerms {
  Tensor kl;
  Tensor cross_entropy;
  Tensor entropy;
  std::size_t length = 0;

  double kl_per_timestep() const { return kl.item() / static_cast<double>(length); }
};

KlTerms kl_loss(const StudentOutput& student, const TeacherDensity& teacher, const ConditioningSeq& c,
                std::size_t draws, CounterRng& rng);

struct ContrastiveTerms {
  KlTerms matched;     // KL(P_S(c1) || P_T(c1))
  KlTerms mismatched;  // KL(P_S(c1) || P_T(c2)), same x and inner samples
  Tensor value;        // matched.kl - gamma * mismatched.kl
};

// Both KLs reuse the student's sample x = g(z, c1) and the same inner noise;
// the teacher is evaluated under c1 and under c2. Throws if c1 == c2.
ContrastiveTerms contrastive_loss(const StudentOutput& student, const TeacherDensity& teacher,
                                  const ConditioningSeq& c1, const ConditioningSeq& c2, double gamma,
                                  std::size_t draws, CounterRng& rng);

}  // namespace pdistill
