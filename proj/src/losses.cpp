#include "rekd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rekd/equivariant.hpp"
#include "rekd/log.hpp"

namespace rekd {

template <typename T>
Tensor<T> window_softmax(const Tensor<T>& k, int window)
{
    if (k.rank() != 2) throw Error(ErrorCode::shape_mismatch, "window_softmax expects an [H,W] map");
    const WindowGrid grid(window, k.dim(0), k.dim(1));
    Tensor<T> m(k.shape());
    for (int i = 0; i < grid.count(); ++i) {
        const int r0 = grid.top(i), c0 = grid.left(i);
        T mx = k(r0, c0);
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) mx = std::max(mx, k(r, c));
        T sum = 0;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) {
                const T e = std::exp(k(r, c) - mx);
                m(r, c) = e;
                sum += e;
            }
        const T inv = T(1) / sum;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) m(r, c) *= inv;
    }
    return m;
}

template <typename T>
Tensor<T> window_softmax_backward(const Tensor<T>& m, const Tensor<T>& grad, int window)
{
    const WindowGrid grid(window, m.dim(0), m.dim(1));
    Tensor<T> gk(m.shape());
    for (int i = 0; i < grid.count(); ++i) {
        const int r0 = grid.top(i), c0 = grid.left(i);
        T dot = 0;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) dot += m(r, c) * grad(r, c);
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) gk(r, c) = m(r, c) * (grad(r, c) - dot);
    }
    return gk;
}

template <typename T>
std::vector<Point2> soft_coordinates(const Tensor<T>& m, int window)
{
    const WindowGrid grid(window, m.dim(0), m.dim(1));
    std::vector<Point2> pts(grid.count());
    for (int i = 0; i < grid.count(); ++i) {
        const int r0 = grid.top(i), c0 = grid.left(i);
        double x = 0, y = 0;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) {
                x += double(m(r, c)) * c;
                y += double(m(r, c)) * r;
            }
        pts[i] = {x, y};
    }
    return pts;
}

int histogram_shift(double angle_deg, int group_order)
{
    return CyclicGroup(group_order).nearest(angle_deg);
}

template <typename T>
T orientation_alignment_loss(const Tensor<T>& o_a, const Tensor<T>& o_b, const RotTransform& t,
                             const Tensor<float>& mask_a, Tensor<T>* grad_a, Tensor<T>* grad_b)
{
    if (o_a.rank() != 3 || o_b.rank() != 3 || o_a.dim(0) != o_b.dim(0))
        throw Error(ErrorCode::shape_mismatch, "orientation loss expects two [G,H,W] maps");
    const int G = o_a.dim(0), h = o_a.dim(1), w = o_a.dim(2);
    if (mask_a.dim(0) != h || mask_a.dim(1) != w) throw Error(ErrorCode::shape_mismatch, "orientation loss: mask shape");
    const WarpSampler align(t.inverse());
    const Tensor<T> b_al = align.apply(o_b);
    if (b_al.dim(1) != h || b_al.dim(2) != w) throw Error(ErrorCode::shape_mismatch, "orientation loss: frame sizes");
    const int shift = histogram_shift(t.angle_deg, G);
    const Tensor<T> a_sh = cyclic_shift(o_a, shift, 0);

    std::size_t n = 0;
    for (float v : mask_a.values()) n += v > 0.5f;
    if (n == 0) throw Error(ErrorCode::no_valid_region, "orientation loss mask is empty");

    constexpr double kFloor = 1e-12;
    const std::size_t plane = std::size_t(h) * w;
    const T inv_n = T(1.0 / double(n));
    T loss = 0;
    Tensor<T> g_ash, g_bal;
    if (grad_a) g_ash = Tensor<T>(a_sh.shape());
    if (grad_b) g_bal = Tensor<T>(b_al.shape());
    for (std::size_t p = 0; p < plane; ++p) {
        if (!(mask_a[p] > 0.5f)) continue;
        T acc = 0;
        for (int g = 0; g < G; ++g) {
            const std::size_t idx = g * plane + p;
            const T q = b_al[idx];
            const bool clamped = !(double(q) > kFloor);
            const T lq = clamped ? T(std::log(kFloor)) : std::log(q);
            acc += a_sh[idx] * lq;
            if (grad_a) g_ash[idx] = -inv_n * lq;
            if (grad_b && !clamped) g_bal[idx] = -inv_n * a_sh[idx] / q;
        }
        loss -= acc;
    }
    if (grad_a) *grad_a = cyclic_shift(g_ash, -shift, 0);
    if (grad_b) *grad_b = align.adjoint(g_bal);
    return loss * inv_n;
}

template <typename T>
T ip_loss(const Tensor<T>& k_a, const Tensor<T>& k_b, const RotTransform& t, int window, const Tensor<float>& mask_a,
          Tensor<T>* grad_a, int* surviving, WeightTape* tape)
{
    if (k_a.rank() != 2 || k_b.rank() != 2) throw Error(ErrorCode::shape_mismatch, "ip_loss expects [H,W] maps");
    const int h = k_a.dim(0), w = k_a.dim(1);
    const WarpSampler align(t.inverse());
    const Tensor<T> b_al = align.apply(k_b);
    if (b_al.dim(0) != h || b_al.dim(1) != w || mask_a.dim(0) != h || mask_a.dim(1) != w)
        throw Error(ErrorCode::shape_mismatch, "ip_loss: frame sizes disagree");

    const WindowGrid grid(window, h, w);
    const Tensor<T> m = window_softmax(k_a, window);
    const auto soft = soft_coordinates(m, window);

    struct Term {
        int window;
        Point2 hard;
        double alpha;
    };
    std::vector<Term> terms;
    for (int i = 0; i < grid.count(); ++i) {
        const int r0 = grid.top(i), c0 = grid.left(i);
        int br = -1, bc = -1;
        T best = 0;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c) {
                if (!(mask_a(r, c) > 0.5f)) continue;
                if (br < 0 || b_al(r, c) > best) {
                    best = b_al(r, c);
                    br = r;
                    bc = c;
                }
            }
        if (br < 0) continue;
        // Window-softmax response of the aligned map at its argmax.
        double z = 0;
        for (int r = r0; r < r0 + window; ++r)
            for (int c = c0; c < c0 + window; ++c)
                if (mask_a(r, c) > 0.5f) z += std::exp(double(b_al(r, c)) - double(best));
        const double resp_b = 1.0 / z;
        // Bilinear sample of m at the soft coordinate; the taps stay inside the window.
        const Point2 s = soft[i];
        const int x0 = std::min(int(std::floor(s.x)), c0 + window - 1);
        const int y0 = std::min(int(std::floor(s.y)), r0 + window - 1);
        const double ax = s.x - x0, ay = s.y - y0;
        const int x1 = std::min(x0 + 1, c0 + window - 1), y1 = std::min(y0 + 1, r0 + window - 1);
        const double resp_a = (1 - ax) * (1 - ay) * m(y0, x0) + ax * (1 - ay) * m(y0, x1) + (1 - ax) * ay * m(y1, x0) +
                              ax * ay * m(y1, x1);
        terms.push_back({i, {double(bc), double(br)}, resp_a + resp_b});
    }
    if (tape) {
        for (auto& term : terms) {
            if (!tape->replay) tape->values.push_back(term.alpha);
            else if (tape->cursor < tape->values.size()) term.alpha = tape->values[tape->cursor++];
            else throw Error(ErrorCode::invalid_argument, "weight tape exhausted");
        }
    }
    if (surviving) *surviving = int(terms.size());
    if (grad_a) *grad_a = Tensor<T>(k_a.shape());
    if (terms.empty()) {
        log().warn("ip_loss: no surviving windows at size {}", window);
        return T(0);
    }
    double alpha_sum = 0, acc = 0;
    for (const auto& term : terms) {
        const Point2 s = soft[term.window];
        const double dx = s.x - term.hard.x, dy = s.y - term.hard.y;
        acc += term.alpha * (dx * dx + dy * dy);
        alpha_sum += term.alpha;
    }
    if (grad_a) {
        // dL/dm(r,c) = gx * c + gy * r for the window's soft coordinate.
        Tensor<T> gm(k_a.shape());
        for (const auto& term : terms) {
            const Point2 s = soft[term.window];
            const double gx = 2 * term.alpha * (s.x - term.hard.x) / alpha_sum;
            const double gy = 2 * term.alpha * (s.y - term.hard.y) / alpha_sum;
            const int r0 = grid.top(term.window), c0 = grid.left(term.window);
            for (int r = r0; r < r0 + window; ++r)
                for (int c = c0; c < c0 + window; ++c) gm(r, c) = T(gx * c + gy * r);
        }
        *grad_a = window_softmax_backward(m, gm, window);
    }
    return T(acc / alpha_sum);
}

template <typename T>
T keypoint_loss(const Tensor<T>& k_a, const Tensor<T>& k_b, const RotTransform& t, const KeypointLossConfig& cfg,
                Tensor<T>* grad_a, Tensor<T>* grad_b, WeightTape* tape)
{
    if (cfg.windows.size() != cfg.weights.size())
        throw Error(ErrorCode::invalid_argument, "keypoint loss: window and weight lists differ in length");
    const RotTransform tinv = t.inverse();
    const Tensor<float> mask_a = source_validity_mask(t);
    const Tensor<float> mask_b = source_validity_mask(tinv);
    if (grad_a) *grad_a = Tensor<T>(k_a.shape());
    if (grad_b) *grad_b = Tensor<T>(k_b.shape());
    T total = 0;
    for (std::size_t l = 0; l < cfg.windows.size(); ++l) {
        const T lambda = T(cfg.weights[l]);
        Tensor<T> ga, gb;
        const T ab = ip_loss(k_a, k_b, t, cfg.windows[l], mask_a, grad_a ? &ga : nullptr, nullptr, tape);
        const T ba = ip_loss(k_b, k_a, tinv, cfg.windows[l], mask_b, grad_b ? &gb : nullptr, nullptr, tape);
        total += lambda * (ab + ba);
        if (grad_a) {
            ga *= lambda;
            *grad_a += ga;
        }
        if (grad_b) {
            gb *= lambda;
            *grad_b += gb;
        }
    }
    return total;
}

#define REKD_INSTANTIATE_LOSSES(T)                                                                                 \
    template Tensor<T> window_softmax(const Tensor<T>&, int);                                                      \
    template Tensor<T> window_softmax_backward(const Tensor<T>&, const Tensor<T>&, int);                           \
    template std::vector<Point2> soft_coordinates(const Tensor<T>&, int);                                          \
    template T orientation_alignment_loss(const Tensor<T>&, const Tensor<T>&, const RotTransform&,                 \
                                          const Tensor<float>&, Tensor<T>*, Tensor<T>*);                           \
    template T ip_loss(const Tensor<T>&, const Tensor<T>&, const RotTransform&, int, const Tensor<float>&,         \
                       Tensor<T>*, int*, WeightTape*);                                                                          \
    template T keypoint_loss(const Tensor<T>&, const Tensor<T>&, const RotTransform&, const KeypointLossConfig&,   \
                             Tensor<T>*, Tensor<T>*, WeightTape*);

REKD_INSTANTIATE_LOSSES(float)
REKD_INSTANTIATE_LOSSES(double)

} // namespace rekd
