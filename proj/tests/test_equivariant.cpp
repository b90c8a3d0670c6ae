#include <doctest.h>

#include <random>

#include "rekd/equivariant.hpp"
#include "rekd/ops.hpp"
#include "support.hpp"

using namespace rekd;
using rekd::testing::random_tensor;

namespace {

TensorF slice_kernel(const TensorF& base, int c, int cin)
{
    const int k = base.dim(2);
    TensorF out({k, k});
    std::copy_n(base.data() + (std::size_t(c) * base.dim(1) + cin) * k * k, k * k, out.data());
    return out;
}

// Group feature [G,C,H,W] rotated spatially by a quarter turn and shifted by G/4.
TensorF rotate_feature(const TensorF& f) { return cyclic_shift(rot90(f), f.dim(0) / 4, 0); }

TensorF plane(const TensorF& f, int g, int c)
{
    const int h = f.dim(2), w = f.dim(3);
    TensorF out({h, w});
    std::copy_n(f.data() + (std::size_t(g) * f.dim(1) + c) * h * w, h * w, out.data());
    return out;
}

} // namespace

TEST_CASE("kernel rotation")
{
    std::mt19937_64 rng(1);
    const TensorF k = random_tensor({5, 5}, rng);
    CHECK(rotate_kernel(k, 0, 36) == k);
    for (int G : {4, 8, 36}) {
        const TensorF r = rotate_kernel(k, G / 4, G);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) CHECK(r(i, j) == k(j, 4 - i));
    }

    // Quarter turns are permutations, so their round trips are exact.
    for (int q = 0; q < 4; ++q) CHECK(rotate_kernel(rotate_kernel(k, 9 * q, 36), 36 - 9 * q, 36) == k);

    // Elsewhere the round trip loses the corners to zero fill and blurs; the
    // bounds are frozen from this seed's measurement over 100 unit kernels.
    double worst = 0, worst_inner = 0;
    std::uniform_int_distribution<int> gd(1, 35);
    for (int n = 0; n < 100; ++n) {
        TensorF u = random_tensor({5, 5}, rng);
        double norm = 0;
        for (float v : u.values()) norm += double(v) * v;
        u *= float(1 / std::sqrt(norm));
        const int g = gd(rng);
        const TensorF back = rotate_kernel(rotate_kernel(u, g, 36), 36 - g, 36);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                const double e = std::abs(back(i, j) - u(i, j));
                worst = std::max(worst, e);
                if (i >= 1 && i <= 3 && j >= 1 && j <= 3) worst_inner = std::max(worst_inner, e);
            }
    }
    MESSAGE("round trip max error " << worst << ", interior " << worst_inner);
    CHECK(worst <= 0.45);
    CHECK(worst_inner <= 0.36);
}

TEST_CASE("lifting convolution")
{
    std::mt19937_64 rng(2);
    const int G = 8;
    const KernelRotator rot(G, 5);
    const TensorF img = random_tensor({1, 12, 12}, rng);

    // A centred delta is only invariant under the permutation rotations.
    TensorF delta({1, 1, 5, 5});
    delta(0, 0, 2, 2) = 1;
    const TensorF d = lift_conv(img, delta, rot);
    for (int g = 0; g < G; g += G / 4) CHECK(plane(d, g, 0) == img.reshaped({12, 12}));
    CHECK(lift_conv(img, delta, KernelRotator(4, 5)) == lift_conv(img, delta, KernelRotator(4, 5)));

    const TensorF base = random_tensor({3, 2, 5, 5}, rng);
    const TensorF x = random_tensor({2, 16, 16}, rng);
    const TensorF out = lift_conv(x, base, rot);
    // Permuted products summed in another order: equal up to rounding.
    CHECK(max_abs_diff(lift_conv(rot90(x), base, rot), rotate_feature(out)) / max_abs(out) < 1e-6);
    const TensorD xd = x.cast<double>(), bd = base.cast<double>();
    const TensorD outd = lift_conv(xd, bd, rot);
    CHECK(max_abs_diff(lift_conv(rot90(xd), bd, rot), cyclic_shift(rot90(outd), G / 4, 0)) / max_abs(outd) < 1e-13);

    // One group element at a time with independently rotated kernels.
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < 3; ++c) {
            TensorF bank({1, 2, 5, 5});
            for (int cin = 0; cin < 2; ++cin) {
                const TensorF r = rotate_kernel(slice_kernel(base, c, cin), g, G);
                std::copy_n(r.data(), 25, bank.data() + cin * 25);
            }
            const TensorF want = conv2d(x, bank, 2).reshaped({16, 16});
            const TensorF got = plane(out, g, c);
            CHECK(max_abs_diff(got, want) / max_abs(want) < 1e-6);
        }
    CHECK_THROWS_AS(lift_conv(random_tensor({3, 8, 8}, rng), base, rot), Error);
}

TEST_CASE("group convolution")
{
    std::mt19937_64 rng(3);
    {
        // 1x1 kernels: a cyclic correlation over the group axis.
        const int G = 4, Cin = 2, Cout = 2;
        const KernelRotator rot(G, 1);
        const TensorF in = random_tensor({G, Cin, 3, 3}, rng);
        const TensorF base = random_tensor({Cout, G * Cin, 1, 1}, rng);
        const TensorF out = group_conv(in, base, rot);
        for (int g = 0; g < G; ++g)
            for (int c = 0; c < Cout; ++c)
                for (int p = 0; p < 9; ++p) {
                    double want = 0;
                    for (int h = 0; h < G; ++h)
                        for (int ci = 0; ci < Cin; ++ci)
                            want += double(in[(h * Cin + ci) * 9 + p]) * base[c * G * Cin + ((h - g + G) % G) * Cin + ci];
                    CHECK(out[(g * Cout + c) * 9 + p] == doctest::Approx(want).epsilon(1e-6));
                }
    }
    {
        // Same slice for every g and kernels every group rotation leaves alone.
        for (auto [G, k] : {std::pair{8, 1}, {4, 5}}) {
            const KernelRotator rot(G, k);
            const TensorF s = random_tensor({1, 10, 10}, rng);
            TensorF in({G, 1, 10, 10});
            for (int g = 0; g < G; ++g) std::copy_n(s.data(), 100, in.data() + g * 100);
            TensorF base({1, G, k, k});
            for (int h = 0; h < G; ++h)
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const int di = i - k / 2, dj = j - k / 2;
                        base(0, h, i, j) = float(h + 1) / float(1 + di * di + dj * dj);
                    }
            const TensorF out = group_conv(in, base, rot);
            CAPTURE(G);
            for (int g = 1; g < G; ++g)
                CHECK(rekd::testing::relative_max_error(plane(out, g, 0), plane(out, 0, 0)) < 1e-6);
        }
    }
    for (int G : {4, 8, 36}) {
        const KernelRotator rot(G, 5);
        const TensorF in = random_tensor({G, 2, 14, 14}, rng);
        const TensorF base = random_tensor({3, G * 2, 5, 5}, rng);
        CAPTURE(G);
        // Same products, different GEMM reduction order: rounding only.
        const TensorF a = group_conv(rotate_feature(in), base, rot), b = rotate_feature(group_conv(in, base, rot));
        CHECK(max_abs_diff(a, b) / max_abs(b) < 1e-5);
        const TensorD ind = in.cast<double>(), based = base.cast<double>();
        const TensorD ad = group_conv(cyclic_shift(rot90(ind), G / 4, 0), based, rot);
        const TensorD bd = cyclic_shift(rot90(group_conv(ind, based, rot)), G / 4, 0);
        CHECK(max_abs_diff(ad, bd) / max_abs(bd) < 1e-12);
    }
    const KernelRotator rot(4, 5);
    CHECK_THROWS_AS(group_conv(random_tensor({4, 2, 8, 8}, rng), random_tensor({1, 4, 5, 5}, rng), rot), Error);
}

TEST_CASE("group pooling")
{
    std::mt19937_64 rng(4);
    const int G = 6, C = 3;
    const TensorF s = random_tensor({C, 5, 5}, rng);
    TensorF con({G, C, 5, 5});
    for (int g = 0; g < G; ++g) std::copy_n(s.data(), s.size(), con.data() + g * s.size());
    CHECK(group_pool_max(con) == s);

    const TensorF x = random_tensor({G, C, 5, 5}, rng);
    const TensorF p = group_pool_max(x);
    CHECK(group_pool_max(cyclic_shift(x, 2, 0)) == p);
    for (int c = 0; c < C; ++c)
        for (int q = 0; q < 25; ++q) {
            float m = x[c * 25 + q];
            for (int g = 1; g < G; ++g) m = std::max(m, x[(g * C + c) * 25 + q]);
            CHECK(p[c * 25 + q] == m);
        }
}

TEST_CASE("channel pooling")
{
    std::mt19937_64 rng(5);
    const TensorF h1 = random_tensor({4, 1, 6, 6}, rng);
    CHECK(channel_pool(h1, TensorF({1}, 1.0f)) == h1.reshaped({4, 6, 6}));
    const TensorF h = random_tensor({8, 3, 6, 6}, rng);
    const TensorF zero = channel_pool(h, TensorF({3}));
    for (float v : zero.values()) CHECK(v == 0.0f);
    const TensorF w = random_tensor({3}, rng);
    CHECK(channel_pool(cyclic_shift(h, 3, 0), w) == cyclic_shift(channel_pool(h, w), 3, 0));
}

TEST_CASE("cyclic shifts")
{
    std::mt19937_64 rng(6);
    const int G = 12;
    const TensorF x = random_tensor({G, 2, 3}, rng);
    CHECK(cyclic_shift(x, 0) == x);
    CHECK(cyclic_shift(x, G) == x);
    CHECK(cyclic_shift(x, 1)[2 * 3 + 4] == x[4]);  // out[1] = x[0]
    std::uniform_int_distribution<int> kd(-30, 30);
    for (int n = 0; n < 50; ++n) {
        const int a = kd(rng), b = kd(rng);
        CHECK(cyclic_shift(cyclic_shift(x, a), b) == cyclic_shift(x, a + b));
    }
}

TEST_CASE("equivariance away from quarter turns is approximate")
{
    std::mt19937_64 rng(7);
    const int G = 36, n = 41;
    const KernelRotator rot(G, 5);
    const TensorF base = random_tensor({2, 1, 5, 5}, rng);
    const TensorF img = rekd::testing::smooth_image(n, n, rng);
    const TensorF ref = lift_conv(img.reshaped({1, n, n}), base, rot);
    double worst = 0;
    for (int deg = 10; deg < 90; deg += 10) {
        const auto t = RotTransform::about_center(deg, n, n);
        const auto warped = warp_image(img, t);
        const TensorF out = lift_conv(warped.image.reshaped({1, n, n}), base, rot);
        const TensorF expect = cyclic_shift(WarpSampler(t).apply(ref), deg / 10, 0);
        double err = 0, scale = 0;
        for (int g = 0; g < G; ++g)
            for (int c = 0; c < 2; ++c)
                for (int i = 8; i < n - 8; ++i)
                    for (int j = 8; j < n - 8; ++j) {
                        const std::size_t idx = ((std::size_t(g) * 2 + c) * n + i) * n + j;
                        err = std::max(err, double(std::abs(out[idx] - expect[idx])));
                        scale = std::max(scale, double(std::abs(expect[idx])));
                    }
        worst = std::max(worst, err / scale);
    }
    // Recorded only: bilinear kernel rotation is not exact between quarter turns.
    MESSAGE("worst relative error at 10 degree steps " << worst);
    CHECK(std::isfinite(worst));
}
