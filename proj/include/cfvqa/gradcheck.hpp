#pragma once

#include "cfvqa/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cfvqa::tensor {

// |analytic - numeric| / max(1, |analytic|, |numeric|): relative for large
// gradients, absolute below unit magnitude where float32 differences of a
// 1e-3 step cannot resolve relative error.
double relative_error(double analytic, double numeric);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    // Coordinates whose +/-eps probes land in a different piecewise region
    // (relu side, clamp side) than the base point.
    std::size_t skipped = 0;
    double tolerance = 0.0;

    bool passed() const { return max_rel_error <= tolerance; }
};

using ScalarFn = std::function<Tensor(const Tensor &)>;
// Piecewise-region signature of the function at a point; coordinates are
// skipped when a probe changes it.
using RegionFn = std::function<std::vector<bool>(const Tensor &)>;

// Compares the reverse-mode gradient of f at x with central differences
// (f(x+eps) - f(x-eps)) / 2eps, one coordinate at a time.
GradCheckReport grad_check(const ScalarFn &f, const Tensor &x, float eps = 1e-3f, double tol = 1e-3,
                           const RegionFn &region = {});

struct GradCheckCase {
    std::string description;
    GradCheckReport report;
};

struct GradCheckSuiteReport {
    std::vector<GradCheckCase> cases;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    bool passed = true;
};

// Random small networks built from every primitive the model uses
// (embedding bag, matmul, add, relu, concat, sigmoid, mul, log, exp, sub,
// softmax, cross entropy, sum, scale), each checked with respect to every
// parameter tensor. Values are drawn in [-2, 2].
GradCheckSuiteReport run_gradcheck_suite(std::uint64_t seed, std::size_t cases, float eps = 1e-3f,
                                         double tol = 1e-3);

}  // namespace cfvqa::tensor
