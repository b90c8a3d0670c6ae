#include "rekd/geometry.hpp"

#include <cmath>
#include <numbers>

namespace rekd {

std::array<double, 2> exact_cos_sin(double angle_deg)
{
    const double q = angle_deg / 90.0;
    if (q == std::floor(q)) {
        const long k = ((static_cast<long>(q) % 4) + 4) % 4;
        static constexpr double c[4] = {1, 0, -1, 0};
        static constexpr double s[4] = {0, 1, 0, -1};
        return {c[k], s[k]};
    }
    const double rad = angle_deg * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

namespace {

std::array<double, 9> invert3(const std::array<double, 9>& m)
{
    const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
    const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
    const double det = a * A + b * B + c * C;
    if (det == 0) throw Error(ErrorCode::invalid_argument, "singular homography");
    const double s = 1.0 / det;
    return {A * s,
            -(b * i - c * h) * s,
            (b * f - c * e) * s,
            B * s,
            (a * i - c * g) * s,
            -(a * f - c * d) * s,
            C * s,
            -(a * h - b * g) * s,
            (a * e - b * d) * s};
}

Point2 apply3(const std::array<double, 9>& m, Point2 p)
{
    const double x = m[0] * p.x + m[1] * p.y + m[2];
    const double y = m[3] * p.x + m[4] * p.y + m[5];
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (w == 1.0) return {x, y};
    return {x / w, y / w};
}

} // namespace

PlanarWarp::PlanarWarp(const std::array<double, 9>& h, int a_w, int a_h, int b_w, int b_h)
  : h_(h), hinv_(invert3(h)), a_w_(a_w), a_h_(a_h), b_w_(b_w), b_h_(b_h)
{ }

Point2 PlanarWarp::forward(Point2 p) const { return apply3(h_, p); }

Point2 PlanarWarp::inverse(Point2 p) const { return apply3(hinv_, p); }

PlanarWarp PlanarWarp::inverted() const
{
    PlanarWarp w;
    w.h_ = hinv_;
    w.hinv_ = h_;
    w.a_w_ = b_w_;
    w.a_h_ = b_h_;
    w.b_w_ = a_w_;
    w.b_h_ = a_h_;
    return w;
}

Point2 RotTransform::forward(Point2 p) const
{
    const auto [c, s] = exact_cos_sin(angle_deg);
    const double x = p.x - (src_w - 1) * 0.5, y = p.y - (src_h - 1) * 0.5;
    return {c * x + s * y + (dst_w - 1) * 0.5, -s * x + c * y + (dst_h - 1) * 0.5};
}

Point2 RotTransform::backward(Point2 p) const
{
    const auto [c, s] = exact_cos_sin(angle_deg);
    const double x = p.x - (dst_w - 1) * 0.5, y = p.y - (dst_h - 1) * 0.5;
    return {c * x - s * y + (src_w - 1) * 0.5, s * x + c * y + (src_h - 1) * 0.5};
}

PlanarWarp RotTransform::planar() const
{
    const auto [c, s] = exact_cos_sin(angle_deg);
    const double sx = (src_w - 1) * 0.5, sy = (src_h - 1) * 0.5;
    const double dx = (dst_w - 1) * 0.5, dy = (dst_h - 1) * 0.5;
    return PlanarWarp({c, s, dx - (c * sx + s * sy), -s, c, dy - (-s * sx + c * sy), 0, 0, 1}, src_w, src_h, dst_w,
                      dst_h);
}

std::vector<Point2> warp_points(const std::vector<Point2>& pts, const RotTransform& t)
{
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(t.forward(p));
    return out;
}

WarpSampler::WarpSampler(const PlanarWarp& warp)
  : in_w_(warp.a_width()), in_h_(warp.a_height()), out_w_(warp.b_width()), out_h_(warp.b_height())
{
    taps_.resize(std::size_t(out_w_) * out_h_);
    for (int i = 0; i < out_h_; ++i)
        for (int j = 0; j < out_w_; ++j) {
            const Point2 q = warp.inverse({double(j), double(i)});
            Tap& t = taps_[std::size_t(i) * out_w_ + j];
            const double fx0 = std::floor(q.x), fy0 = std::floor(q.y);
            const double ax = q.x - fx0, ay = q.y - fy0;
            const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
            for (int k = 0; k < 4; ++k) {
                const double xx = fx0 + (k & 1), yy = fy0 + (k >> 1);
                const bool inside = xx >= 0 && xx < in_w_ && yy >= 0 && yy < in_h_ && wts[k] != 0;
                t.idx[k] = inside ? int(yy) * in_w_ + int(xx) : -1;
                t.w[k] = inside ? wts[k] : 0.0;
            }
        }
}

template <typename T>
Tensor<T> WarpSampler::apply(const Tensor<T>& src) const
{
    if (src.rank() < 2 || src.dim(-1) != in_w_ || src.dim(-2) != in_h_)
        throw Error(ErrorCode::shape_mismatch, "warp: source " + shape_string(src.shape()) + " vs expected " +
                                                   std::to_string(in_h_) + "x" + std::to_string(in_w_));
    Shape shape = src.shape();
    shape[shape.size() - 2] = out_h_;
    shape[shape.size() - 1] = out_w_;
    Tensor<T> out(shape);
    const std::size_t in_plane = std::size_t(in_w_) * in_h_, out_plane = std::size_t(out_w_) * out_h_;
    const std::size_t planes = src.size() / in_plane;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* s = src.data() + p * in_plane;
        T* d = out.data() + p * out_plane;
        for (std::size_t o = 0; o < out_plane; ++o) {
            const Tap& t = taps_[o];
            T acc = 0;
            for (int k = 0; k < 4; ++k)
                if (t.idx[k] >= 0) acc += T(t.w[k]) * s[t.idx[k]];
            d[o] = acc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> WarpSampler::adjoint(const Tensor<T>& grad) const
{
    if (grad.rank() < 2 || grad.dim(-1) != out_w_ || grad.dim(-2) != out_h_)
        throw Error(ErrorCode::shape_mismatch, "warp adjoint: gradient shape " + shape_string(grad.shape()));
    Shape shape = grad.shape();
    shape[shape.size() - 2] = in_h_;
    shape[shape.size() - 1] = in_w_;
    Tensor<T> out(shape);
    const std::size_t in_plane = std::size_t(in_w_) * in_h_, out_plane = std::size_t(out_w_) * out_h_;
    const std::size_t planes = grad.size() / out_plane;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* g = grad.data() + p * out_plane;
        T* d = out.data() + p * in_plane;
        for (std::size_t o = 0; o < out_plane; ++o) {
            const Tap& t = taps_[o];
            for (int k = 0; k < 4; ++k)
                if (t.idx[k] >= 0) d[t.idx[k]] += T(t.w[k]) * g[o];
        }
    }
    return out;
}

Tensor<float> WarpSampler::validity_mask() const
{
    Tensor<float> mask({out_h_, out_w_});
    for (std::size_t o = 0; o < taps_.size(); ++o) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += taps_[o].w[k];
        mask[o] = s >= 0.999 ? 1.0f : 0.0f;
    }
    return mask;
}

template Tensor<float> WarpSampler::apply(const Tensor<float>&) const;
template Tensor<double> WarpSampler::apply(const Tensor<double>&) const;
template Tensor<float> WarpSampler::adjoint(const Tensor<float>&) const;
template Tensor<double> WarpSampler::adjoint(const Tensor<double>&) const;

WarpResult warp_image(const Tensor<float>& img, const PlanarWarp& w)
{
    const WarpSampler sampler(w);
    return {sampler.apply(img), sampler.validity_mask()};
}

WarpResult warp_image(const Tensor<float>& img, const RotTransform& t) { return warp_image(img, t.planar()); }

Tensor<float> source_validity_mask(const RotTransform& t) { return WarpSampler(t.inverse()).validity_mask(); }

} // namespace rekd
