#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace amc {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool passed = true;
};

// Denominator floor of the relative error: coordinates whose gradient is
// smaller than this are compared in absolute terms.
inline constexpr double kRelativeErrorFloor = 1e-5;

// Fourth-order central differences (points x +- h, x +- 2h) of a scalar
// function, compared coordinate-wise with an analytic gradient. The
// relative error of a coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point, std::span<const double> analytic,
                                  double tolerance, double step = 1e-5);

}  // namespace amc
