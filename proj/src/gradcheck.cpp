#include "rekd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rekd {

double relative_error(double analytic, double numeric)
{
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double grad_check(const DiffOp& op, const std::vector<TensorD>& inputs, double eps, int probes_per_input,
                  std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const TensorD y0 = op.forward(inputs);
    TensorD upstream(y0.shape());
    for (auto& v : upstream.values()) v = normal(rng);

    const auto analytic = op.backward(inputs, upstream);
    if (analytic.size() != inputs.size())
        throw Error(ErrorCode::shape_mismatch, op.name + ": backward returned wrong number of gradients");

    auto scalar = [&](const std::vector<TensorD>& xs) {
        const TensorD y = op.forward(xs);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * upstream[i];
        return s;
    };

    double worst = 0;
    std::vector<TensorD> xs = inputs;
    for (std::size_t n = 0; n < inputs.size(); ++n) {
        if (analytic[n].empty()) continue;
        inputs[n].require_same_shape(analytic[n], op.name.c_str());
        std::vector<std::size_t> probes;
        if (probes_per_input < 0) {
            probes.resize(inputs[n].size());
            for (std::size_t i = 0; i < probes.size(); ++i) probes[i] = i;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, inputs[n].size() - 1);
            for (int p = 0; p < probes_per_input; ++p) probes.push_back(pick(rng));
        }
        for (std::size_t i : probes) {
            const double orig = xs[n][i];
            xs[n][i] = orig + eps;
            const double fp = scalar(xs);
            xs[n][i] = orig - eps;
            const double fm = scalar(xs);
            xs[n][i] = orig;
            worst = std::max(worst, relative_error(analytic[n][i], (fp - fm) / (2 * eps)));
        }
    }
    return worst;
}

double grad_check_scalar(const std::function<double(const std::vector<double>&)>& loss, const std::vector<double>& x,
                         const std::vector<double>& analytic, const std::vector<std::size_t>& probes, double eps)
{
    std::vector<double> xs = x;
    double worst = 0;
    for (std::size_t i : probes) {
        const double orig = xs[i];
        xs[i] = orig + eps;
        const double fp = loss(xs);
        xs[i] = orig - eps;
        const double fm = loss(xs);
        xs[i] = orig;
        worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2 * eps)));
    }
    return worst;
}

} // namespace rekd
