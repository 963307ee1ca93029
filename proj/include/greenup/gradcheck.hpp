#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "greenup/tensor.hpp"

namespace greenup {

// Denominator floor: an error bound of 1e-4 then means 1e-4 relative with a
// 1e-6 absolute floor.
inline constexpr double kGradCheckFloor = 1e-2;

struct GradCheckResult {
    // max over elements of |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor)
    double max_error = 0.0;
    std::size_t checked = 0;
};

// Compares reverse-mode gradients of a scalar-valued `loss` against central
// differences. `loss` is re-evaluated after perturbing each element of each
// leaf in `inputs` in place, so it must read those leaves on every call.
// Throws OracleError when two evaluations at the same point disagree.
GradCheckResult finite_difference_check(const std::function<Tensor64()>& loss, std::vector<Tensor64> inputs,
                                        double h = 1e-5);

// Single-input form: f(x).
double finite_difference_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x,
                               double h = 1e-5);

}  // namespace greenup
