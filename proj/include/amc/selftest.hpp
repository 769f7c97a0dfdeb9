#pragma once

// Built-in verification suites run by `afnet selftest`.

#include <cstdint>
#include <string>
#include <vector>

namespace amc {

struct SelfTestCase {
    std::string name;
    bool passed = false;
    double metric = 0.0;     // max relative error, or max absolute deviation
    double threshold = 0.0;  // pass iff metric < threshold
};

struct SelfTestReport {
    std::vector<SelfTestCase> cases;
    double seconds = 0.0;
    bool passed() const;
};

// Central finite differences against backprop in 64-bit for every layer,
// the fusion module (lambda 1 and 2), one AF unit and the tiny network
// (CE and confidence-weighted loss). Relative error threshold 1e-4.
SelfTestReport run_gradient_suite(std::uint64_t seed = 1);

// Closed-form contracts: lambda-softmax sums and shift invariance, fusion
// value counts, loss and confidence-weight analytics, unit-energy
// constellations and unit-power frames.
SelfTestReport run_invariant_suite(std::uint64_t seed = 1);

}  // namespace amc
