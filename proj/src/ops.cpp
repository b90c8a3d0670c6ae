#include "rekd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "rekd/parallel.hpp"

namespace rekd {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Output pixels per im2col block. Fixed so the reduction order of every
// output element is independent of scheduling.
constexpr int kColumnBlock = 256;

struct ConvGeometry {
    int batch, cin, h, w, cout, k, pad, stride, oh, ow;
    bool batched;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel, int padding, int stride)
{
    if (kernel.rank() != 4) throw Error(ErrorCode::shape_mismatch, "conv2d kernel must be [Cout,Cin,k,k]");
    if (input.rank() != 3 && input.rank() != 4)
        throw Error(ErrorCode::shape_mismatch, "conv2d input must be [Cin,H,W] or [B,Cin,H,W]");
    if (padding < 0 || stride < 1) throw Error(ErrorCode::invalid_argument, "conv2d: padding >= 0, stride >= 1");
    ConvGeometry g{};
    g.batched = input.rank() == 4;
    g.batch = g.batched ? input.dim(0) : 1;
    g.cin = input.dim(-3);
    g.h = input.dim(-2);
    g.w = input.dim(-1);
    g.cout = kernel.dim(0);
    g.k = kernel.dim(2);
    if (kernel.dim(3) != g.k || g.k % 2 == 0) throw Error(ErrorCode::shape_mismatch, "conv2d kernel must be square with odd size");
    if (kernel.dim(1) != g.cin)
        throw Error(ErrorCode::shape_mismatch, "conv2d: input has " + std::to_string(g.cin) + " channels, kernel expects " +
                                                   std::to_string(kernel.dim(1)));
    g.pad = padding;
    g.stride = stride;
    const int span_h = g.h + 2 * padding - g.k;
    const int span_w = g.w + 2 * padding - g.k;
    if (span_h < 0 || span_w < 0) throw Error(ErrorCode::shape_mismatch, "conv2d: non-positive output extent");
    g.oh = span_h / stride + 1;
    g.ow = span_w / stride + 1;
    return g;
}

Shape conv_out_shape(const ConvGeometry& g)
{
    if (g.batched) return {g.batch, g.cout, g.oh, g.ow};
    return {g.cout, g.oh, g.ow};
}

// cols[(ci*k + ky)*k + kx][j] for output pixels [col0, col0 + ncols).
template <typename T>
void im2col_block(const T* img, const ConvGeometry& g, int col0, int ncols, T* cols)
{
    const int kk = g.k * g.k;
    for (int ci = 0; ci < g.cin; ++ci) {
        const T* plane = img + std::size_t(ci) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                T* row = cols + std::size_t(ci * kk + ky * g.k + kx) * ncols;
                int oy = col0 / g.ow;
                int ox = col0 % g.ow;
                for (int j = 0; j < ncols;) {
                    const int iy = oy * g.stride - g.pad + ky;
                    const int run = std::min(g.ow - ox, ncols - j);
                    if (iy < 0 || iy >= g.h) {
                        std::fill(row + j, row + j + run, T(0));
                    } else if (g.stride == 1) {
                        const T* src = plane + std::size_t(iy) * g.w;
                        const int ix0 = ox - g.pad + kx;
                        const int lo = std::clamp(-ix0, 0, run);
                        const int hi = std::clamp(g.w - ix0, lo, run);
                        std::fill(row + j, row + j + lo, T(0));
                        std::copy(src + ix0 + lo, src + ix0 + hi, row + j + lo);
                        std::fill(row + j + hi, row + j + run, T(0));
                    } else {
                        const T* src = plane + std::size_t(iy) * g.w;
                        for (int t = 0; t < run; ++t) {
                            const int ix = (ox + t) * g.stride - g.pad + kx;
                            row[j + t] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
                        }
                    }
                    j += run;
                    ox = 0;
                    ++oy;
                }
            }
        }
    }
}

template <typename T>
void col2im_block(const T* cols, const ConvGeometry& g, int col0, int ncols, T* img)
{
    const int kk = g.k * g.k;
    for (int ci = 0; ci < g.cin; ++ci) {
        T* plane = img + std::size_t(ci) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                const T* row = cols + std::size_t(ci * kk + ky * g.k + kx) * ncols;
                for (int j = 0; j < ncols; ++j) {
                    const int o = col0 + j;
                    const int iy = (o / g.ow) * g.stride - g.pad + ky;
                    const int ix = (o % g.ow) * g.stride - g.pad + kx;
                    if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) plane[std::size_t(iy) * g.w + ix] += row[j];
                }
            }
        }
    }
}

template <typename T>
void conv_forward_into(const T* input, const T* kernel, const ConvGeometry& g, T* out)
{
    const int npix = g.oh * g.ow;
    const int kdim = g.cin * g.k * g.k;
    const int nblocks = (npix + kColumnBlock - 1) / kColumnBlock;
    const int tasks = g.batch * nblocks;
    const std::size_t in_stride = std::size_t(g.cin) * g.h * g.w;
    const std::size_t out_stride = std::size_t(g.cout) * npix;
    CMapRM<T> wmat(kernel, g.cout, kdim, Eigen::OuterStride<>(kdim));

#pragma omp parallel num_threads(parallel::thread_count()) if (tasks > 1 && parallel::thread_count() > 1)
    {
        std::vector<T> cols(std::size_t(kdim) * std::min(kColumnBlock, npix));
#pragma omp for schedule(static)
        for (int t = 0; t < tasks; ++t) {
            const int b = t / nblocks;
            const int col0 = (t % nblocks) * kColumnBlock;
            const int ncols = std::min(kColumnBlock, npix - col0);
            im2col_block(input + b * in_stride, g, col0, ncols, cols.data());
            CMapRM<T> cmat(cols.data(), kdim, ncols, Eigen::OuterStride<>(ncols));
            MapRM<T> omat(out + b * out_stride + col0, g.cout, ncols, Eigen::OuterStride<>(npix));
            omat.noalias() = wmat * cmat;
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int padding, int stride)
{
    const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
    Tensor<T> out(conv_out_shape(g));
    conv_forward_into(input.data(), kernel.data(), g, out.data());
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out, int padding,
                             int stride, bool need_input_grad)
{
    const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
    if (grad_out.shape() != conv_out_shape(g))
        throw Error(ErrorCode::shape_mismatch, "conv2d_backward: grad shape " + shape_string(grad_out.shape()));
    const int npix = g.oh * g.ow;
    const int kdim = g.cin * g.k * g.k;
    const int nblocks = (npix + kColumnBlock - 1) / kColumnBlock;
    const int tasks = g.batch * nblocks;
    const std::size_t in_stride = std::size_t(g.cin) * g.h * g.w;
    const std::size_t out_stride = std::size_t(g.cout) * npix;

    ConvGrads<T> grads;

    // Kernel gradient: one partial per (image, block), reduced in task order.
    std::vector<T> partials(std::size_t(tasks) * g.cout * kdim);
#pragma omp parallel num_threads(parallel::thread_count()) if (tasks > 1 && parallel::thread_count() > 1)
    {
        std::vector<T> cols(std::size_t(kdim) * std::min(kColumnBlock, npix));
#pragma omp for schedule(static)
        for (int t = 0; t < tasks; ++t) {
            const int b = t / nblocks;
            const int col0 = (t % nblocks) * kColumnBlock;
            const int ncols = std::min(kColumnBlock, npix - col0);
            im2col_block(input.data() + b * in_stride, g, col0, ncols, cols.data());
            CMapRM<T> cmat(cols.data(), kdim, ncols, Eigen::OuterStride<>(ncols));
            CMapRM<T> gmat(grad_out.data() + b * out_stride + col0, g.cout, ncols, Eigen::OuterStride<>(npix));
            MapRM<T> pmat(partials.data() + std::size_t(t) * g.cout * kdim, g.cout, kdim, Eigen::OuterStride<>(kdim));
            pmat.noalias() = gmat * cmat.transpose();
        }
    }
    grads.kernel = Tensor<T>(kernel.shape());
    T* gk = grads.kernel.data();
    const std::size_t ksize = std::size_t(g.cout) * kdim;
    for (int t = 0; t < tasks; ++t) {
        const T* p = partials.data() + std::size_t(t) * ksize;
        for (std::size_t i = 0; i < ksize; ++i) gk[i] += p[i];
    }

    if (!need_input_grad) return grads;

    grads.input = Tensor<T>(input.shape());
    if (stride == 1 && padding <= g.k - 1) {
        // Input gradient of a stride-1 correlation is a correlation of the
        // output gradient with the flipped, channel-transposed kernel.
        Tensor<T> flipped({g.cin, g.cout, g.k, g.k});
        for (int co = 0; co < g.cout; ++co)
            for (int ci = 0; ci < g.cin; ++ci)
                for (int ky = 0; ky < g.k; ++ky)
                    for (int kx = 0; kx < g.k; ++kx)
                        flipped(ci, co, g.k - 1 - ky, g.k - 1 - kx) = kernel(co, ci, ky, kx);
        ConvGeometry gt{};
        gt.batched = g.batched;
        gt.batch = g.batch;
        gt.cin = g.cout;
        gt.h = g.oh;
        gt.w = g.ow;
        gt.cout = g.cin;
        gt.k = g.k;
        gt.pad = g.k - 1 - padding;
        gt.stride = 1;
        gt.oh = g.h;
        gt.ow = g.w;
        conv_forward_into(grad_out.data(), flipped.data(), gt, grads.input.data());
    } else {
        CMapRM<T> wmat(kernel.data(), g.cout, kdim, Eigen::OuterStride<>(kdim));
        std::vector<T> cols(std::size_t(kdim) * std::min(kColumnBlock, npix));
        for (int t = 0; t < tasks; ++t) {
            const int b = t / nblocks;
            const int col0 = (t % nblocks) * kColumnBlock;
            const int ncols = std::min(kColumnBlock, npix - col0);
            CMapRM<T> gmat(grad_out.data() + b * out_stride + col0, g.cout, ncols, Eigen::OuterStride<>(npix));
            MapRM<T> cmat(cols.data(), kdim, ncols, Eigen::OuterStride<>(ncols));
            cmat.noalias() = wmat.transpose() * gmat;
            col2im_block(cols.data(), g, col0, ncols, grads.input.data() + b * in_stride);
        }
    }
    return grads;
}

template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& input, const Tensor<T>& kernel, int padding, int stride)
{
    const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
    Tensor<T> out(conv_out_shape(g));
    const Tensor<T> in4 = input.reshaped({g.batch, g.cin, g.h, g.w});
    for (int b = 0; b < g.batch; ++b)
        for (int co = 0; co < g.cout; ++co)
            for (int oy = 0; oy < g.oh; ++oy)
                for (int ox = 0; ox < g.ow; ++ox) {
                    T acc = 0;
                    for (int ci = 0; ci < g.cin; ++ci)
                        for (int ky = 0; ky < g.k; ++ky) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= g.h) continue;
                            for (int kx = 0; kx < g.k; ++kx) {
                                const int ix = ox * stride - padding + kx;
                                if (ix < 0 || ix >= g.w) continue;
                                acc += in4(b, ci, iy, ix) * kernel(co, ci, ky, kx);
                            }
                        }
                    out[((std::size_t(b) * g.cout + co) * g.oh + oy) * g.ow + ox] = acc;
                }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward_reference(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                                       int padding, int stride)
{
    const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
    const Tensor<T> in4 = input.reshaped({g.batch, g.cin, g.h, g.w});
    const Tensor<T> go4 = grad_out.reshaped({g.batch, g.cout, g.oh, g.ow});
    Tensor<T> gin({g.batch, g.cin, g.h, g.w});
    Tensor<T> gk(kernel.shape());
    for (int b = 0; b < g.batch; ++b)
        for (int co = 0; co < g.cout; ++co)
            for (int oy = 0; oy < g.oh; ++oy)
                for (int ox = 0; ox < g.ow; ++ox) {
                    const T go = go4(b, co, oy, ox);
                    for (int ci = 0; ci < g.cin; ++ci)
                        for (int ky = 0; ky < g.k; ++ky) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= g.h) continue;
                            for (int kx = 0; kx < g.k; ++kx) {
                                const int ix = ox * stride - padding + kx;
                                if (ix < 0 || ix >= g.w) continue;
                                gin(b, ci, iy, ix) += go * kernel(co, ci, ky, kx);
                                gk(co, ci, ky, kx) += go * in4(b, ci, iy, ix);
                            }
                        }
                }
    return {gin.reshaped(input.shape()), gk};
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x)
{
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad)
{
    y.require_same_shape(grad, "relu_backward");
    Tensor<T> g = grad;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > T(0))) g[i] = T(0);
    return g;
}

namespace {

struct AxisLayout {
    std::size_t outer, n, inner;
};

template <typename T>
AxisLayout axis_layout(const Tensor<T>& x, int axis)
{
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) throw Error(ErrorCode::invalid_argument, "softmax axis out of range");
    AxisLayout l{1, std::size_t(x.dim(axis)), 1};
    for (int i = 0; i < axis; ++i) l.outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) l.inner *= x.dim(i);
    return l;
}

} // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis)
{
    const AxisLayout l = axis_layout(x, axis);
    Tensor<T> y(x.shape());
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < l.inner; ++i) {
            const std::size_t base = o * l.n * l.inner + i;
            T mx = x[base];
            for (std::size_t k = 1; k < l.n; ++k) mx = std::max(mx, x[base + k * l.inner]);
            T sum = 0;
            for (std::size_t k = 0; k < l.n; ++k) {
                const T e = std::exp(x[base + k * l.inner] - mx);
                y[base + k * l.inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::size_t k = 0; k < l.n; ++k) y[base + k * l.inner] *= inv;
        }
    return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& grad, int axis)
{
    y.require_same_shape(grad, "softmax_backward");
    const AxisLayout l = axis_layout(y, axis);
    Tensor<T> gx(y.shape());
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < l.inner; ++i) {
            const std::size_t base = o * l.n * l.inner + i;
            T dot = 0;
            for (std::size_t k = 0; k < l.n; ++k) dot += y[base + k * l.inner] * grad[base + k * l.inner];
            for (std::size_t k = 0; k < l.n; ++k) {
                const std::size_t idx = base + k * l.inner;
                gx[idx] = y[idx] * (grad[idx] - dot);
            }
        }
    return gx;
}

namespace {

struct ResizeTap {
    int i0, i1;
    double w1;
};

std::vector<ResizeTap> resize_taps(int in, int out)
{
    std::vector<ResizeTap> taps(out);
    const double scale = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        double w1 = src - i0;
        if (i1 == i0) w1 = 0;
        taps[o] = {i0, i1, w1};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w)
{
    if (x.rank() < 2) throw Error(ErrorCode::shape_mismatch, "bilinear_resize needs rank >= 2");
    if (out_h < 1 || out_w < 1) throw Error(ErrorCode::invalid_argument, "bilinear_resize target extents must be >= 1");
    const int in_h = x.dim(-2), in_w = x.dim(-1);
    Shape shape = x.shape();
    shape[shape.size() - 2] = out_h;
    shape[shape.size() - 1] = out_w;
    if (in_h == out_h && in_w == out_w) return x;
    Tensor<T> y(shape);
    const auto ty = resize_taps(in_h, out_h);
    const auto tx = resize_taps(in_w, out_w);
    const std::size_t planes = x.size() / (std::size_t(in_h) * in_w);
#pragma omp parallel for num_threads(parallel::thread_count()) if (planes > 1 && parallel::thread_count() > 1)
    for (std::ptrdiff_t p = 0; p < std::ptrdiff_t(planes); ++p) {
        const T* src = x.data() + p * std::size_t(in_h) * in_w;
        T* dst = y.data() + p * std::size_t(out_h) * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const T wy1 = T(ty[oy].w1), wy0 = T(1) - wy1;
            const T* r0 = src + std::size_t(ty[oy].i0) * in_w;
            const T* r1 = src + std::size_t(ty[oy].i1) * in_w;
            for (int ox = 0; ox < out_w; ++ox) {
                const T wx1 = T(tx[ox].w1), wx0 = T(1) - wx1;
                const int a = tx[ox].i0, b = tx[ox].i1;
                dst[std::size_t(oy) * out_w + ox] = wy0 * (wx0 * r0[a] + wx1 * r0[b]) + wy1 * (wx0 * r1[a] + wx1 * r1[b]);
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad, int in_h, int in_w)
{
    const int out_h = grad.dim(-2), out_w = grad.dim(-1);
    Shape shape = grad.shape();
    shape[shape.size() - 2] = in_h;
    shape[shape.size() - 1] = in_w;
    if (in_h == out_h && in_w == out_w) return grad;
    Tensor<T> gx(shape);
    const auto ty = resize_taps(in_h, out_h);
    const auto tx = resize_taps(in_w, out_w);
    const std::size_t planes = grad.size() / (std::size_t(out_h) * out_w);
#pragma omp parallel for num_threads(parallel::thread_count()) if (planes > 1 && parallel::thread_count() > 1)
    for (std::ptrdiff_t p = 0; p < std::ptrdiff_t(planes); ++p) {
        const T* g = grad.data() + p * std::size_t(out_h) * out_w;
        T* dst = gx.data() + p * std::size_t(in_h) * in_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const T wy1 = T(ty[oy].w1), wy0 = T(1) - wy1;
            T* r0 = dst + std::size_t(ty[oy].i0) * in_w;
            T* r1 = dst + std::size_t(ty[oy].i1) * in_w;
            for (int ox = 0; ox < out_w; ++ox) {
                const T wx1 = T(tx[ox].w1), wx0 = T(1) - wx1;
                const int a = tx[ox].i0, b = tx[ox].i1;
                const T v = g[std::size_t(oy) * out_w + ox];
                r0[a] += wy0 * wx0 * v;
                r0[b] += wy0 * wx1 * v;
                r1[a] += wy1 * wx0 * v;
                r1[b] += wy1 * wx1 * v;
            }
        }
    }
    return gx;
}

template <typename T>
BatchNormGroup<T>::BatchNormGroup(int channels)
  : gamma({channels}, T(1)), beta({channels}, T(0)), grad_gamma({channels}), grad_beta({channels}),
    running_mean({channels}, T(0)), running_var({channels}, T(1))
{ }

template <typename T>
Tensor<T> BatchNormGroup<T>::forward(const Tensor<T>& x, bool training, Cache* cache)
{
    if (x.rank() != 5 || x.dim(2) != channels())
        throw Error(ErrorCode::shape_mismatch, "batchnorm_group expects [B,G," + std::to_string(channels()) + ",H,W], got " +
                                                   shape_string(x.shape()));
    const int outer = x.dim(0) * x.dim(1);
    const int c_count = channels();
    const std::size_t plane = std::size_t(x.dim(3)) * x.dim(4);
    const std::size_t count = std::size_t(outer) * plane;

    std::vector<T> mean(c_count), inv_std(c_count);
    for (int c = 0; c < c_count; ++c) {
        if (training) {
            double s = 0;
            for (int o = 0; o < outer; ++o) {
                const T* p = x.data() + (std::size_t(o) * c_count + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            const double mu = s / double(count);
            double ss = 0;
            for (int o = 0; o < outer; ++o) {
                const T* p = x.data() + (std::size_t(o) * c_count + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    ss += d * d;
                }
            }
            const double var = ss / double(count);
            mean[c] = T(mu);
            inv_std[c] = T(1.0 / std::sqrt(var + double(eps)));
            const double unbiased = count > 1 ? ss / double(count - 1) : var;
            running_mean[c] = T((1 - double(momentum)) * running_mean[c] + double(momentum) * mu);
            running_var[c] = T((1 - double(momentum)) * running_var[c] + double(momentum) * unbiased);
        } else {
            mean[c] = running_mean[c];
            inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
        }
    }

    Tensor<T> y(x.shape());
    Tensor<T> xhat;
    if (cache) xhat = Tensor<T>(x.shape());
    for (int o = 0; o < outer; ++o)
        for (int c = 0; c < c_count; ++c) {
            const std::size_t off = (std::size_t(o) * c_count + c) * plane;
            const T mu = mean[c], is = inv_std[c], ga = gamma[c], be = beta[c];
            for (std::size_t i = 0; i < plane; ++i) {
                const T h = (x[off + i] - mu) * is;
                if (cache) xhat[off + i] = h;
                y[off + i] = ga * h + be;
            }
        }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->training = training;
    }
    return y;
}

template <typename T>
Tensor<T> BatchNormGroup<T>::backward(const Cache& cache, const Tensor<T>& grad)
{
    const Tensor<T>& xhat = cache.xhat;
    xhat.require_same_shape(grad, "batchnorm_backward");
    const int outer = grad.dim(0) * grad.dim(1);
    const int c_count = channels();
    const std::size_t plane = std::size_t(grad.dim(3)) * grad.dim(4);
    const double count = double(outer) * double(plane);
    Tensor<T> gx(grad.shape());
    for (int c = 0; c < c_count; ++c) {
        double sg = 0, sgx = 0;
        for (int o = 0; o < outer; ++o) {
            const std::size_t off = (std::size_t(o) * c_count + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sg += grad[off + i];
                sgx += double(grad[off + i]) * xhat[off + i];
            }
        }
        grad_beta[c] += T(sg);
        grad_gamma[c] += T(sgx);
        const double k = double(gamma[c]) * cache.inv_std[c];
        const double mg = sg / count, mgx = sgx / count;
        for (int o = 0; o < outer; ++o) {
            const std::size_t off = (std::size_t(o) * c_count + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                if (cache.training)
                    gx[off + i] = T(k * (grad[off + i] - mg - xhat[off + i] * mgx));
                else
                    gx[off + i] = T(k * grad[off + i]);
            }
        }
    }
    return gx;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               const std::vector<std::string>& names, AdamState& state)
{
    if (params.size() != grads.size()) throw Error(ErrorCode::invalid_argument, "adam_step: params/grads length mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        params[p]->require_same_shape(*grads[p], "adam_step");
        if (!grads[p]->all_finite())
            throw Error(ErrorCode::numeric,
                        "non-finite gradient for parameter '" + (p < names.size() ? names[p] : std::to_string(p)) + "'");
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (std::size_t p = 0; p < params.size(); ++p) {
            state.m[p].assign(params[p]->size(), 0.0);
            state.v[p].assign(params[p]->size(), 0.0);
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (state.m[p].size() != params[p]->size())
            throw Error(ErrorCode::shape_mismatch, "adam_step: moment size changed for parameter " + std::to_string(p));
        Tensor<T>& w = *params[p];
        const Tensor<T>& g = *grads[p];
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m[i] = state.beta1 * m[i] + (1 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1 - state.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] = T(double(w[i]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

#define REKD_INSTANTIATE_OPS(T)                                                                                       \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                                           \
    template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, bool);       \
    template Tensor<T> conv2d_reference(const Tensor<T>&, const Tensor<T>&, int, int);                                 \
    template ConvGrads<T> conv2d_backward_reference(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
    template Tensor<T> relu(const Tensor<T>&);                                                                         \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                                 \
    template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&, int);                                      \
    template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);                                                    \
    template Tensor<T> bilinear_resize_backward(const Tensor<T>&, int, int);                                           \
    template class BatchNormGroup<T>;                                                                                  \
    template void adam_step(const std::vector<Tensor<T>*>&, const std::vector<const Tensor<T>*>&,                      \
                            const std::vector<std::string>&, AdamState&);

REKD_INSTANTIATE_OPS(float)
REKD_INSTANTIATE_OPS(double)

} // namespace rekd
