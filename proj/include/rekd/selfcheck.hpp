#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rekd {

struct CheckLine {
    std::string name;
    double value = 0;      // measured error
    double tolerance = 0;  // pass when value <= tolerance
    bool pass() const { return value <= tolerance; }
};

struct EquivarianceCheckOptions {
    int inits = 20;
    std::vector<int> orders{4, 8, 36};
    int channels = 2;
    int size = 48;
    double tolerance = 1e-4;
    std::uint64_t seed = 1;
};

/// Quarter-turn equivariance of a freshly initialized network, one line per
/// group order: the worst scale-normalized error over all layer outputs, the
/// orientation map (with the group shift) and the score map (without).
std::vector<CheckLine> equivariance_check(const EquivarianceCheckOptions& opts = {});

struct GradientCheckOptions {
    int probes = 5;
    double tolerance = 1e-4;
    std::uint64_t seed = 1;
};

/// Central-difference check of every differentiable op in double precision,
/// plus the end-to-end training loss.
std::vector<CheckLine> gradient_check(const GradientCheckOptions& opts = {});

/// Max relative error of the end-to-end loss gradient on `probes` random
/// weights (score bias excluded: its gradient is identically zero).
double end_to_end_gradient_error(int probes, std::uint64_t seed);

} // namespace rekd
