#pragma once

#include <cmath>
#include <random>

#include "rekd/geometry.hpp"
#include "rekd/pair.hpp"
#include "rekd/tensor.hpp"

namespace rekd::testing {

template <typename T = float>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = T(u(rng));
    return t;
}

/// Smooth random image in [0,1]: sum of a few oriented sinusoids and blobs.
inline Tensor<float> smooth_image(int h, int w, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<float> img({h, w});
    struct Wave {
        double fx, fy, ph, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 6; ++i) waves.push_back({(u(rng) - 0.5) * 0.6, (u(rng) - 0.5) * 0.6, u(rng) * 6.283, u(rng)});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0;
            for (const auto& wv : waves) v += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.ph);
            img(y, x) = float(0.5 + 0.15 * v);
        }
    for (auto& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

inline RigidPair rotated_pair(const Tensor<float>& img, double angle)
{
    const auto t = RotTransform::about_center(angle, img.dim(1), img.dim(0));
    auto warped = warp_image(img, t);
    return {img, std::move(warped.image), t, std::move(warped.mask)};
}

/// max |a-b| / max(1, max|b|)
template <typename T>
double relative_max_error(const Tensor<T>& a, const Tensor<T>& b)
{
    return double(max_abs_diff(a, b)) / std::max(1.0, double(max_abs(b)));
}

} // namespace rekd::testing
