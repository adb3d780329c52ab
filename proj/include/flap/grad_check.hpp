#pragma once

#include <functional>

#include "flap/tape.hpp"

namespace flap {

// Central-difference gradient check. f builds a scalar loss from x on the
// given tape and must be a pure function of x's current values. Returns the
// max over coordinates of |analytic - numeric| / max(1, |analytic|).
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  Tensor x, double h = 1e-5);

}  // namespace flap
