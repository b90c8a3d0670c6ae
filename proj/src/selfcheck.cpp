#include "rekd/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "rekd/equivariant.hpp"
#include "rekd/geometry.hpp"
#include "rekd/gradcheck.hpp"
#include "rekd/losses.hpp"
#include "rekd/model.hpp"
#include "rekd/ops.hpp"

namespace rekd {

namespace {

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = T(u(rng));
    return t;
}

// Values kept at least `gap` away from zero so relu stays off its kink.
TensorD away_from_zero(Shape shape, Rng& rng, double gap)
{
    std::uniform_real_distribution<double> u(gap, 1.0);
    std::bernoulli_distribution sign(0.5);
    TensorD t(std::move(shape));
    for (auto& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
    return t;
}

TensorD smooth_image(int h, int w, Rng& rng)
{
    std::uniform_real_distribution<double> u(0, 1);
    TensorD img({h, w});
    const double fx = u(rng) * 0.5, fy = u(rng) * 0.5, gx = u(rng) * 0.3, gy = u(rng) * 0.3, ph = u(rng) * 6;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img(y, x) = 0.5 + 0.25 * std::sin(fx * x + fy * y + ph) + 0.2 * std::cos(gx * x - gy * y);
    return img;
}

template <typename T>
double scaled_error(const Tensor<T>& got, const Tensor<T>& want)
{
    const double scale = std::max(double(max_abs(want)), 1e-12);
    return double(max_abs_diff(got, want)) / scale;
}

TensorD scalar(double v) { return TensorD({1}, v); }

} // namespace

std::vector<CheckLine> equivariance_check(const EquivarianceCheckOptions& opts)
{
    std::vector<CheckLine> lines;
    Rng rng(opts.seed);
    for (int order : opts.orders) {
        if (order % 4 != 0) throw Error(ErrorCode::invalid_argument, "quarter-turn check needs an order divisible by 4");
        double worst = 0;
        for (int init = 0; init < opts.inits; ++init) {
            RekdConfig cfg;
            cfg.group_order = order;
            cfg.channels = opts.channels;
            cfg.seed = rng();
            const Model<float> model(cfg);
            const Tensor<float> img = random_tensor<float>({opts.size, opts.size}, rng, 0, 1);
            const auto a = model.forward(img, true);
            const auto b = model.forward(rot90(img), true);
            const int q = order / 4;
            for (std::size_t s = 0; s < a.layer_outputs.size(); ++s)
                for (std::size_t l = 0; l < a.layer_outputs[s].size(); ++l)
                    worst = std::max(worst, scaled_error(b.layer_outputs[s][l], cyclic_shift(rot90(a.layer_outputs[s][l]), q, 0)));
            worst = std::max(worst, scaled_error(b.O, cyclic_shift(rot90(a.O), q, 0)));
            worst = std::max(worst, scaled_error(b.K, rot90(a.K)));
        }
        lines.push_back({"quarter-turn equivariance, order " + std::to_string(order), worst, opts.tolerance});
    }
    return lines;
}

double end_to_end_gradient_error(int probes, std::uint64_t seed)
{
    Rng rng(seed);
    RekdConfig cfg;
    cfg.group_order = 4;
    cfg.channels = 2;
    cfg.windows = {8, 16};
    cfg.window_weights = {4, 1};
    cfg.seed = rng();
    Model<double> model(cfg);
    std::vector<RigidPair> pairs;
    for (double angle : {90.0, 30.0}) {
        const Tensor<float> img = smooth_image(32, 32, rng).cast<float>();
        const auto t = RotTransform::about_center(angle, 32, 32);
        auto warped = warp_image(img, t);
        pairs.push_back({img, std::move(warped.image), t, std::move(warped.mask)});
    }
    WeightTape tape;
    tape.rewind(false);
    model.zero_grad();
    model.loss_and_grad(pairs, &tape);
    auto params = model.parameters();
    std::erase_if(params, [](const auto& p) { return p.name == "rho.bias"; });
    std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
    // relu, group max and the hard argmax make the loss piecewise smooth; the
    // step has to stay inside one piece.
    const double eps = 1e-6;
    double worst = 0;
    for (int p = 0; p < probes; ++p) {
        auto& param = params[pick_param(rng)];
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, param.value->size() - 1)(rng);
        const double analytic = (*param.grad)[i];
        const double x0 = (*param.value)[i];
        auto eval = [&](double x) {
            (*param.value)[i] = x;
            tape.rewind(true);
            Model<double> copy = model;
            return copy.loss_and_grad(pairs, &tape).total;
        };
        const double numeric = (eval(x0 + eps) - eval(x0 - eps)) / (2 * eps);
        (*param.value)[i] = x0;
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

std::vector<CheckLine> gradient_check(const GradientCheckOptions& opts)
{
    Rng rng(opts.seed);
    const int probes = opts.probes;
    std::vector<CheckLine> lines;
    auto run = [&](const DiffOp& op, const std::vector<TensorD>& inputs) {
        lines.push_back({op.name, grad_check(op, inputs, 1e-4, probes, rng()), opts.tolerance});
    };

    run({"conv2d",
         [](const std::vector<TensorD>& x) { return conv2d(x[0], x[1], 1); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             auto r = conv2d_backward(x[0], x[1], g, 1);
             return std::vector<TensorD>{r.input, r.kernel};
         }},
        {random_tensor<double>({2, 3, 7, 6}, rng), random_tensor<double>({4, 3, 3, 3}, rng)});
    run({"conv2d stride 2",
         [](const std::vector<TensorD>& x) { return conv2d(x[0], x[1], 2, 2); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             auto r = conv2d_backward(x[0], x[1], g, 2, 2);
             return std::vector<TensorD>{r.input, r.kernel};
         }},
        {random_tensor<double>({2, 9, 8}, rng), random_tensor<double>({3, 2, 5, 5}, rng)});
    run({"relu",
         [](const std::vector<TensorD>& x) { return relu(x[0]); },
         [](const std::vector<TensorD>& x, const TensorD& g) { return std::vector<TensorD>{relu_backward(relu(x[0]), g)}; }},
        {away_from_zero({3, 5, 5}, rng, 1e-2)});
    run({"softmax",
         [](const std::vector<TensorD>& x) { return softmax(x[0], 1); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             return std::vector<TensorD>{softmax_backward(softmax(x[0], 1), g, 1)};
         }},
        {random_tensor<double>({2, 6, 4, 3}, rng, -3, 3)});
    run({"bilinear_resize",
         [](const std::vector<TensorD>& x) { return bilinear_resize(x[0], 7, 5); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             return std::vector<TensorD>{bilinear_resize_backward(g, x[0].dim(-2), x[0].dim(-1))};
         }},
        {random_tensor<double>({2, 10, 9}, rng)});
    run({"batchnorm_group",
         [](const std::vector<TensorD>& x) {
             BatchNormGroup<double> bn(x[1].dim(0));
             bn.gamma = x[1];
             bn.beta = x[2];
             return bn.forward(x[0], true);
         },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             BatchNormGroup<double> bn(x[1].dim(0));
             bn.gamma = x[1];
             bn.beta = x[2];
             BatchNormGroup<double>::Cache cache;
             bn.forward(x[0], true, &cache);
             TensorD dx = bn.backward(cache, g);
             return std::vector<TensorD>{dx, bn.grad_gamma, bn.grad_beta};
         }},
        {random_tensor<double>({2, 4, 3, 5, 5}, rng), random_tensor<double>({3}, rng, 0.5, 1.5),
         random_tensor<double>({3}, rng)});

    const KernelRotator rot8(8, 5);
    run({"lift_conv",
         [&](const std::vector<TensorD>& x) { return lift_conv(x[0], x[1], rot8); },
         [&](const std::vector<TensorD>& x, const TensorD& g) {
             const TensorD bank = expand_lift_kernel(x[1], rot8);
             const auto r = conv2d_backward(x[0], bank, g.reshaped({g.dim(0), g.dim(1) * g.dim(2), g.dim(3), g.dim(4)}), 2);
             return std::vector<TensorD>{r.input, fold_lift_kernel_grad(r.kernel, x[1].shape(), rot8)};
         }},
        {random_tensor<double>({1, 1, 9, 9}, rng), random_tensor<double>({2, 1, 5, 5}, rng)});
    run({"group_conv",
         [&](const std::vector<TensorD>& x) { return group_conv(x[0], x[1], rot8); },
         [&](const std::vector<TensorD>& x, const TensorD& g) {
             const TensorD bank = expand_group_kernel(x[1], rot8);
             const Shape& s = x[0].shape();
             const auto r = conv2d_backward(x[0].reshaped({s[0], s[1] * s[2], s[3], s[4]}), bank,
                                            g.reshaped({g.dim(0), g.dim(1) * g.dim(2), g.dim(3), g.dim(4)}), 2);
             return std::vector<TensorD>{r.input.reshaped(s), fold_group_kernel_grad(r.kernel, x[1].shape(), rot8)};
         }},
        {random_tensor<double>({1, 8, 2, 7, 7}, rng), random_tensor<double>({3, 16, 5, 5}, rng)});
    run({"group_pool_max",
         [](const std::vector<TensorD>& x) { return group_pool_max(x[0]); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             std::vector<int> arg;
             group_pool_max(x[0], &arg);
             return std::vector<TensorD>{group_pool_max_backward(g, arg, x[0].shape())};
         }},
        {random_tensor<double>({2, 8, 3, 4, 4}, rng)});
    run({"channel_pool",
         [](const std::vector<TensorD>& x) { return channel_pool(x[0], x[1]); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             TensorD gw(x[1].shape());
             TensorD gh = channel_pool_backward(x[0], x[1], g, gw);
             return std::vector<TensorD>{gh, gw};
         }},
        {random_tensor<double>({2, 8, 3, 4, 4}, rng), random_tensor<double>({3}, rng)});
    run({"cyclic_shift",
         [](const std::vector<TensorD>& x) { return cyclic_shift(x[0], 3, 1); },
         [](const std::vector<TensorD>&, const TensorD& g) { return std::vector<TensorD>{cyclic_shift(g, -3, 1)}; }},
        {random_tensor<double>({2, 8, 3, 3}, rng)});
    const WarpSampler sampler(RotTransform::about_center(37.0, 11, 11));
    run({"rotation warp",
         [&](const std::vector<TensorD>& x) { return sampler.apply(x[0]); },
         [&](const std::vector<TensorD>&, const TensorD& g) { return std::vector<TensorD>{sampler.adjoint(g)}; }},
        {random_tensor<double>({2, 11, 11}, rng)});
    run({"window_softmax",
         [](const std::vector<TensorD>& x) { return window_softmax(x[0], 4); },
         [](const std::vector<TensorD>& x, const TensorD& g) {
             return std::vector<TensorD>{window_softmax_backward(window_softmax(x[0], 4), g, 4)};
         }},
        {random_tensor<double>({8, 12}, rng, -2, 2)});

    // Loss terms on a 90 degree pair (exact alignment) and a 30 degree pair.
    for (double angle : {90.0, 30.0}) {
        const auto t = RotTransform::about_center(angle, 16, 16);
        const Tensor<float> mask = source_validity_mask(t);
        const std::string tag = " (" + std::to_string(int(angle)) + " deg)";
        run({"orientation loss" + tag,
             [=](const std::vector<TensorD>& x) {
                 return scalar(orientation_alignment_loss(softmax(x[0], 0), softmax(x[1], 0), t, mask));
             },
             [=](const std::vector<TensorD>& x, const TensorD& g) {
                 const TensorD pa = softmax(x[0], 0), pb = softmax(x[1], 0);
                 TensorD ga, gb;
                 orientation_alignment_loss(pa, pb, t, mask, &ga, &gb);
                 ga *= g[0];
                 gb *= g[0];
                 return std::vector<TensorD>{softmax_backward(pa, ga, 0), softmax_backward(pb, gb, 0)};
             }},
            {random_tensor<double>({8, 16, 16}, rng, -2, 2), random_tensor<double>({8, 16, 16}, rng, -2, 2)});

        // The argmax side is held fixed, so only K_a is perturbed; the weight
        // tape pins the non-differentiated window weights.
        const TensorD k_b = random_tensor<double>({16, 16}, rng, -3, 3);
        auto tape = std::make_shared<WeightTape>();
        run({"ip_loss" + tag,
             [=](const std::vector<TensorD>& x) {
                 tape->rewind(!tape->values.empty());
                 return scalar(ip_loss<double>(x[0], k_b, t, 8, mask, nullptr, nullptr, tape.get()));
             },
             [=](const std::vector<TensorD>& x, const TensorD& g) {
                 TensorD ga;
                 tape->rewind(false);
                 ip_loss(x[0], k_b, t, 8, mask, &ga, nullptr, tape.get());
                 ga *= g[0];
                 return std::vector<TensorD>{ga};
             }},
            {random_tensor<double>({16, 16}, rng, -3, 3)});
    }
    lines.push_back({"end-to-end total loss", end_to_end_gradient_error(probes, rng()), opts.tolerance});
    return lines;
}

} // namespace rekd
