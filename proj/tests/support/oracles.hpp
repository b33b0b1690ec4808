#pragma once

#include <cstddef>
#include <vector>

#include "core/rng.hpp"
#include "student/student.hpp"
#include "teacher/teacher.hpp"

namespace pdistill::testing {

// O(T^2) generation: re-runs the full teacher forward on the growing prefix
// at every step and draws from the head at the last position. Same rng
// consumption as the cached sampler. With `quantize`, each draw is snapped to
// its bin centre before being fed back.
std::vector<double> naive_ancestral_sample(const TeacherNet& net, const ConditioningSeq& c,
                                           std::size_t length, CounterRng& rng, bool quantize = false);

// x[t] obtained by running every flow on z[0..t] alone, one timestep at a time.
std::vector<double> sequential_student(const FlowStack& stack, const Tensor& z, const ConditioningSeq& c);

}  // namespace pdistill::testing
