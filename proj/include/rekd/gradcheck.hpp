#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rekd/tensor.hpp"

namespace rekd {

/// A differentiable map with a hand-written backward pass, evaluated in double.
struct DiffOp {
    std::string name;
    std::function<TensorD(const std::vector<TensorD>&)> forward;
    /// Gradient of <grad_out, forward(inputs)> with respect to each input.
    std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD& grad_out)> backward;
};

/// |a - n| / max(1e-8, |a| + |n|) with n the central difference.
double relative_error(double analytic, double numeric);

/// Max relative error between the analytic gradient and central differences
/// of the scalar <r, op(inputs)> for a random fixed upstream r.
/// `probes_per_input` < 0 checks every coordinate, otherwise that many random
/// coordinates per input.
double grad_check(const DiffOp& op, const std::vector<TensorD>& inputs, double eps = 1e-4, int probes_per_input = -1,
                  std::uint64_t seed = 7);

/// Scalar-function variant: compares `analytic[i]` with a central
/// difference of `loss` at each probed index of `x`.
double grad_check_scalar(const std::function<double(const std::vector<double>&)>& loss, const std::vector<double>& x,
                         const std::vector<double>& analytic, const std::vector<std::size_t>& probes, double eps = 1e-4);

} // namespace rekd
