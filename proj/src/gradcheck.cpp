#include "amc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "amc/error.hpp"

namespace amc {

GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point, std::span<const double> analytic,
                                  double tolerance, double step) {
    if (point.size() != analytic.size()) {
        throw Error(ErrorKind::ShapeMismatch, "finite_diff_check: point has " + std::to_string(point.size()) +
                                                  " coordinates, gradient has " + std::to_string(analytic.size()));
    }
    std::vector<double> x(point.begin(), point.end());
    GradCheckResult result;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        auto at = [&](double offset) {
            x[i] = saved + offset;
            return f(x);
        };
        const double numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
        x[i] = saved;
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), kRelativeErrorFloor});
        const double rel = std::abs(numeric - analytic[i]) / denom;
        if (i == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
            result.analytic = analytic[i];
            result.numeric = numeric;
        }
    }
    result.passed = result.max_rel_error < tolerance;
    return result;
}

}  // namespace amc
