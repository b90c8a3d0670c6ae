#include "rekd/equivariant.hpp"

#include <cmath>

#include "rekd/geometry.hpp"
#include "rekd/ops.hpp"

namespace rekd {

CyclicGroup::CyclicGroup(int order)
  : order_(order)
{
    if (order < 1) throw Error(ErrorCode::invalid_argument, "group order must be positive");
}

int CyclicGroup::nearest(double angle_deg) const
{
    return wrap(std::lround(angle_deg / bin_degrees()));
}

namespace {

struct BilinearTap {
    int src;
    double w;
};

// Bilinear taps of a k x k grid rotated by angle_deg; dst(d) = src(R d).
std::vector<std::vector<BilinearTap>> rotation_taps(int k, double angle_deg)
{
    const auto [c, s] = exact_cos_sin(angle_deg);
    const double ctr = (k - 1) * 0.5;
    std::vector<std::vector<BilinearTap>> taps(std::size_t(k) * k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double x = j - ctr, y = i - ctr;
            const double xs = c * x - s * y + ctr;
            const double ys = s * x + c * y + ctr;
            const double x0 = std::floor(xs), y0 = std::floor(ys);
            const double ax = xs - x0, ay = ys - y0;
            const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
            for (int t = 0; t < 4; ++t) {
                const double xx = x0 + (t & 1), yy = y0 + (t >> 1);
                if (wts[t] == 0 || xx < 0 || yy < 0 || xx >= k || yy >= k) continue;
                taps[std::size_t(i) * k + j].push_back({int(yy) * k + int(xx), wts[t]});
            }
        }
    return taps;
}

// Source index of dst (i,j) under q counter-clockwise quarter turns.
int quarter_turn_source(int i, int j, int k, int q)
{
    for (int n = 0; n < q; ++n) {
        const int ni = j, nj = k - 1 - i;
        i = ni;
        j = nj;
    }
    return i * k + j;
}

} // namespace

KernelRotator::KernelRotator(int order, int ksize)
  : order_(order), k_(ksize), taps_(order)
{
    if (order < 1) throw Error(ErrorCode::invalid_argument, "group order must be positive");
    if (ksize < 1 || ksize % 2 == 0) throw Error(ErrorCode::invalid_argument, "kernel size must be odd");
    const CyclicGroup group(order);
    if (order % 4 == 0) {
        const int quarter = order / 4;
        std::vector<std::vector<std::vector<BilinearTap>>> residual(quarter);
        for (int r = 0; r < quarter; ++r) residual[r] = rotation_taps(k_, group.angle_deg(r));
        for (int g = 0; g < order; ++g) {
            const int q = g / quarter, r = g % quarter;
            for (int i = 0; i < k_; ++i)
                for (int j = 0; j < k_; ++j) {
                    const int e = quarter_turn_source(i, j, k_, q);
                    for (const auto& t : residual[r][e]) taps_[g].push_back({i * k_ + j, t.src, t.w});
                }
        }
    } else {
        for (int g = 0; g < order; ++g) {
            const auto taps = rotation_taps(k_, group.angle_deg(g));
            for (int d = 0; d < k_ * k_; ++d)
                for (const auto& t : taps[d]) taps_[g].push_back({d, t.src, t.w});
        }
    }
}

template <typename T>
void KernelRotator::rotate(const T* src, int g, T* dst) const
{
    std::fill(dst, dst + k_ * k_, T(0));
    for (const auto& t : taps_[g]) dst[t.dst] += T(t.w) * src[t.src];
}

template <typename T>
void KernelRotator::rotate_adjoint(const T* grad_dst, int g, T* grad_src) const
{
    for (const auto& t : taps_[g]) grad_src[t.src] += T(t.w) * grad_dst[t.dst];
}

template <typename T>
Tensor<T> rotate_kernel(const Tensor<T>& kernel, int g, int order)
{
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1))
        throw Error(ErrorCode::shape_mismatch, "rotate_kernel expects a square [k,k] kernel");
    const KernelRotator rot(order, kernel.dim(0));
    Tensor<T> out(kernel.shape());
    rot.rotate(kernel.data(), CyclicGroup(order).wrap(g), out.data());
    return out;
}

template <typename T>
Tensor<T> expand_lift_kernel(const Tensor<T>& base, const KernelRotator& rot)
{
    if (base.rank() != 4 || base.dim(2) != rot.ksize() || base.dim(3) != rot.ksize())
        throw Error(ErrorCode::shape_mismatch, "lift kernel must be [Cout,Cin,k,k], got " + shape_string(base.shape()));
    const int G = rot.order(), cout = base.dim(0), cin = base.dim(1), kk = rot.ksize() * rot.ksize();
    Tensor<T> bank({G * cout, cin, rot.ksize(), rot.ksize()});
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < cout; ++c)
            for (int ci = 0; ci < cin; ++ci)
                rot.rotate(base.data() + (std::size_t(c) * cin + ci) * kk, g,
                           bank.data() + ((std::size_t(g) * cout + c) * cin + ci) * kk);
    return bank;
}

template <typename T>
Tensor<T> fold_lift_kernel_grad(const Tensor<T>& bank_grad, const Shape& base_shape, const KernelRotator& rot)
{
    const int G = rot.order(), cout = base_shape[0], cin = base_shape[1], kk = rot.ksize() * rot.ksize();
    Tensor<T> grad(base_shape);
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < cout; ++c)
            for (int ci = 0; ci < cin; ++ci)
                rot.rotate_adjoint(bank_grad.data() + ((std::size_t(g) * cout + c) * cin + ci) * kk, g,
                                   grad.data() + (std::size_t(c) * cin + ci) * kk);
    return grad;
}

template <typename T>
Tensor<T> lift_conv(const Tensor<T>& img, const Tensor<T>& base, const KernelRotator& rot)
{
    if (img.rank() != 3 && img.rank() != 4)
        throw Error(ErrorCode::shape_mismatch, "lift_conv input must be [Cin,H,W] or [B,Cin,H,W]");
    if (img.dim(-3) != base.dim(1))
        throw Error(ErrorCode::shape_mismatch, "lift_conv: input channels " + std::to_string(img.dim(-3)) +
                                                   " vs kernel " + std::to_string(base.dim(1)));
    const Tensor<T> bank = expand_lift_kernel(base, rot);
    Tensor<T> out = conv2d(img, bank, (rot.ksize() - 1) / 2);
    const int G = rot.order(), cout = base.dim(0), h = img.dim(-2), w = img.dim(-1);
    if (img.rank() == 3)
        out.reshape_inplace({G, cout, h, w});
    else
        out.reshape_inplace({img.dim(0), G, cout, h, w});
    return out;
}

template <typename T>
Tensor<T> expand_group_kernel(const Tensor<T>& base, const KernelRotator& rot)
{
    const int G = rot.order();
    if (base.rank() != 4 || base.dim(1) % G != 0 || base.dim(2) != rot.ksize())
        throw Error(ErrorCode::shape_mismatch, "group kernel must be [Cout,G*Cin,k,k], got " + shape_string(base.shape()));
    const int cout = base.dim(0), cin = base.dim(1) / G, kk = rot.ksize() * rot.ksize();
    Tensor<T> bank({G * cout, G * cin, rot.ksize(), rot.ksize()});
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < cout; ++c)
            for (int h = 0; h < G; ++h) {
                const int rel = ((h - g) % G + G) % G;
                for (int ci = 0; ci < cin; ++ci)
                    rot.rotate(base.data() + (std::size_t(c) * G * cin + rel * cin + ci) * kk, g,
                               bank.data() + ((std::size_t(g) * cout + c) * G * cin + h * cin + ci) * kk);
            }
    return bank;
}

template <typename T>
Tensor<T> fold_group_kernel_grad(const Tensor<T>& bank_grad, const Shape& base_shape, const KernelRotator& rot)
{
    const int G = rot.order(), cout = base_shape[0], cin = base_shape[1] / G, kk = rot.ksize() * rot.ksize();
    Tensor<T> grad(base_shape);
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < cout; ++c)
            for (int h = 0; h < G; ++h) {
                const int rel = ((h - g) % G + G) % G;
                for (int ci = 0; ci < cin; ++ci)
                    rot.rotate_adjoint(bank_grad.data() + ((std::size_t(g) * cout + c) * G * cin + h * cin + ci) * kk, g,
                                       grad.data() + (std::size_t(c) * G * cin + rel * cin + ci) * kk);
            }
    return grad;
}

template <typename T>
Tensor<T> group_conv(const Tensor<T>& input, const Tensor<T>& base, const KernelRotator& rot)
{
    const int G = rot.order();
    if ((input.rank() != 4 && input.rank() != 5) || input.dim(-4) != G)
        throw Error(ErrorCode::shape_mismatch, "group_conv input must be [B,G,C,H,W] with G=" + std::to_string(G));
    const int cin = input.dim(-3), h = input.dim(-2), w = input.dim(-1);
    if (base.dim(1) != G * cin)
        throw Error(ErrorCode::shape_mismatch, "group_conv: kernel expects " + std::to_string(base.dim(1)) +
                                                   " input fields, input has " + std::to_string(G * cin));
    const int batch = input.rank() == 5 ? input.dim(0) : 1;
    const Tensor<T> bank = expand_group_kernel(base, rot);
    Tensor<T> out = conv2d(input.reshaped({batch, G * cin, h, w}), bank, (rot.ksize() - 1) / 2);
    if (input.rank() == 4)
        out.reshape_inplace({G, base.dim(0), h, w});
    else
        out.reshape_inplace({batch, G, base.dim(0), h, w});
    return out;
}

template <typename T>
Tensor<T> group_pool_max(const Tensor<T>& h, std::vector<int>* argmax)
{
    if (h.rank() != 4 && h.rank() != 5) throw Error(ErrorCode::shape_mismatch, "group_pool_max expects a group feature");
    const int batch = h.rank() == 5 ? h.dim(0) : 1;
    const int G = h.dim(-4);
    const std::size_t inner = std::size_t(h.dim(-3)) * h.dim(-2) * h.dim(-1);
    Shape shape(h.shape().end() - 3, h.shape().end());
    if (h.rank() == 5) shape.insert(shape.begin(), batch);
    Tensor<T> out(shape);
    if (argmax) argmax->assign(out.size(), 0);
    for (int b = 0; b < batch; ++b) {
        const T* src = h.data() + std::size_t(b) * G * inner;
        T* dst = out.data() + std::size_t(b) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
            T best = src[i];
            int arg = 0;
            for (int g = 1; g < G; ++g) {
                const T v = src[std::size_t(g) * inner + i];
                if (v > best) {
                    best = v;
                    arg = g;
                }
            }
            dst[i] = best;
            if (argmax) (*argmax)[std::size_t(b) * inner + i] = arg;
        }
    }
    return out;
}

template <typename T>
Tensor<T> group_pool_max_backward(const Tensor<T>& grad, const std::vector<int>& argmax, const Shape& input_shape)
{
    Tensor<T> gin(input_shape);
    const int batch = input_shape.size() == 5 ? input_shape[0] : 1;
    const int G = input_shape[input_shape.size() - 4];
    const std::size_t inner = grad.size() / batch;
    for (int b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t o = std::size_t(b) * inner + i;
            gin[(std::size_t(b) * G + argmax[o]) * inner + i] = grad[o];
        }
    return gin;
}

template <typename T>
Tensor<T> channel_pool(const Tensor<T>& h, const Tensor<T>& w)
{
    if (h.rank() != 4 && h.rank() != 5) throw Error(ErrorCode::shape_mismatch, "channel_pool expects a group feature");
    const int C = h.dim(-3);
    if (int(w.size()) != C) throw Error(ErrorCode::shape_mismatch, "channel_pool weight length must equal C");
    const std::size_t plane = std::size_t(h.dim(-2)) * h.dim(-1);
    const std::size_t fields = h.size() / (C * plane);
    Shape shape = h.shape();
    shape.erase(shape.end() - 3);
    Tensor<T> out(shape);
    for (std::size_t f = 0; f < fields; ++f) {
        T* dst = out.data() + f * plane;
        for (int c = 0; c < C; ++c) {
            const T* src = h.data() + (f * C + c) * plane;
            const T wc = w[c];
            for (std::size_t i = 0; i < plane; ++i) dst[i] += wc * src[i];
        }
    }
    return out;
}

template <typename T>
Tensor<T> channel_pool_backward(const Tensor<T>& h, const Tensor<T>& w, const Tensor<T>& grad, Tensor<T>& grad_w)
{
    const int C = h.dim(-3);
    const std::size_t plane = std::size_t(h.dim(-2)) * h.dim(-1);
    const std::size_t fields = h.size() / (C * plane);
    Tensor<T> gh(h.shape());
    for (std::size_t f = 0; f < fields; ++f) {
        const T* g = grad.data() + f * plane;
        for (int c = 0; c < C; ++c) {
            const T* src = h.data() + (f * C + c) * plane;
            T* dst = gh.data() + (f * C + c) * plane;
            const T wc = w[c];
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) {
                dst[i] = wc * g[i];
                acc += src[i] * g[i];
            }
            grad_w[c] += acc;
        }
    }
    return gh;
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int k, int axis)
{
    if (axis < 0) axis += x.rank();
    const int G = x.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int shift = ((k % G) + G) % G;
    Tensor<T> out(x.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (int g = 0; g < G; ++g) {
            const int src = (g - shift + G) % G;
            std::copy_n(x.data() + (o * G + src) * inner, inner, out.data() + (o * G + g) * inner);
        }
    return out;
}

template <typename T>
Tensor<T> rot90(const Tensor<T>& x, int q)
{
    q = ((q % 4) + 4) % 4;
    Tensor<T> cur = x;
    for (int n = 0; n < q; ++n) {
        const int h = cur.dim(-2), w = cur.dim(-1);
        Shape shape = cur.shape();
        shape[shape.size() - 2] = w;
        shape[shape.size() - 1] = h;
        Tensor<T> out(shape);
        const std::size_t plane = std::size_t(h) * w;
        const std::size_t planes = cur.size() / plane;
        for (std::size_t p = 0; p < planes; ++p) {
            const T* s = cur.data() + p * plane;
            T* d = out.data() + p * plane;
            // out[i][j] = in[j][w-1-i], out is w x h
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < h; ++j) d[std::size_t(i) * h + j] = s[std::size_t(j) * w + (w - 1 - i)];
        }
        cur = std::move(out);
    }
    return cur;
}

#define REKD_INSTANTIATE_EQUIV(T)                                                                                   \
    template void KernelRotator::rotate(const T*, int, T*) const;                                                   \
    template void KernelRotator::rotate_adjoint(const T*, int, T*) const;                                           \
    template Tensor<T> rotate_kernel(const Tensor<T>&, int, int);                                                   \
    template Tensor<T> lift_conv(const Tensor<T>&, const Tensor<T>&, const KernelRotator&);                         \
    template Tensor<T> expand_lift_kernel(const Tensor<T>&, const KernelRotator&);                                  \
    template Tensor<T> fold_lift_kernel_grad(const Tensor<T>&, const Shape&, const KernelRotator&);                 \
    template Tensor<T> group_conv(const Tensor<T>&, const Tensor<T>&, const KernelRotator&);                        \
    template Tensor<T> expand_group_kernel(const Tensor<T>&, const KernelRotator&);                                 \
    template Tensor<T> fold_group_kernel_grad(const Tensor<T>&, const Shape&, const KernelRotator&);                \
    template Tensor<T> group_pool_max(const Tensor<T>&, std::vector<int>*);                                         \
    template Tensor<T> group_pool_max_backward(const Tensor<T>&, const std::vector<int>&, const Shape&);            \
    template Tensor<T> channel_pool(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> channel_pool_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&);     \
    template Tensor<T> cyclic_shift(const Tensor<T>&, int, int);                                                    \
    template Tensor<T> rot90(const Tensor<T>&, int);

REKD_INSTANTIATE_EQUIV(float)
REKD_INSTANTIATE_EQUIV(double)

} // namespace rekd
