#pragma once

#include <array>
#include <vector>

#include "rekd/tensor.hpp"

namespace rekd {

// Pixel-center convention throughout: pixel (row i, col j) sits at x = j,
// y = i. Rotation centers are ((W-1)/2, (H-1)/2).

struct Point2 {
    double x = 0, y = 0;
};

/// Projective map from frame A pixel coordinates to frame B.
class PlanarWarp {
public:
    PlanarWarp() = default;
    PlanarWarp(const std::array<double, 9>& h, int a_w, int a_h, int b_w, int b_h);

    Point2 forward(Point2 p) const;  // A -> B
    Point2 inverse(Point2 p) const;  // B -> A
    PlanarWarp inverted() const;

    const std::array<double, 9>& matrix() const { return h_; }
    int a_width() const { return a_w_; }
    int a_height() const { return a_h_; }
    int b_width() const { return b_w_; }
    int b_height() const { return b_h_; }

private:
    std::array<double, 9> h_{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<double, 9> hinv_{1, 0, 0, 0, 1, 0, 0, 0, 1};
    int a_w_ = 0, a_h_ = 0, b_w_ = 0, b_h_ = 0;
};

/// In-plane rotation about the image center. Positive angles are
/// counter-clockwise as seen on screen: warping by 90 degrees gives
/// out[i][j] = in[j][H-1-i].
struct RotTransform {
    double angle_deg = 0;
    int src_w = 0, src_h = 0;
    int dst_w = 0, dst_h = 0;

    static RotTransform about_center(double angle_deg, int w, int h) { return {angle_deg, w, h, w, h}; }

    RotTransform inverse() const { return {-angle_deg, dst_w, dst_h, src_w, src_h}; }

    /// Source-frame point to destination frame.
    Point2 forward(Point2 p) const;
    /// Destination-frame point to source frame (the sampling map of warp_image).
    Point2 backward(Point2 p) const;

    PlanarWarp planar() const;
};

/// cos/sin with multiples of 90 degrees snapped to exact values.
std::array<double, 2> exact_cos_sin(double angle_deg);

std::vector<Point2> warp_points(const std::vector<Point2>& pts, const RotTransform& t);

/// Precomputed bilinear gather for warping planes of one size into another.
/// Samples outside the source read 0.
class WarpSampler {
public:
    WarpSampler(const PlanarWarp& warp);  // samples frame A into frame B
    WarpSampler(const RotTransform& t) : WarpSampler(t.planar()) { }

    int out_width() const { return out_w_; }
    int out_height() const { return out_h_; }
    int in_width() const { return in_w_; }
    int in_height() const { return in_h_; }

    /// Applies to every plane of a [..., H, W] tensor.
    template <typename T>
    Tensor<T> apply(const Tensor<T>& src) const;

    /// Adjoint of apply: scatters a [..., H', W'] gradient back to the source.
    template <typename T>
    Tensor<T> adjoint(const Tensor<T>& grad) const;

    /// 1 where the sample of an all-ones image reaches 0.999.
    Tensor<float> validity_mask() const;

private:
    struct Tap {
        int idx[4];
        double w[4];
    };
    int in_w_, in_h_, out_w_, out_h_;
    std::vector<Tap> taps_;
};

struct WarpResult {
    Tensor<float> image;
    Tensor<float> mask;
};

/// Inverse-mapped bilinear warp of an [H,W] image (or [C,H,W] planes) with
/// validity mask in the destination frame.
WarpResult warp_image(const Tensor<float>& img, const RotTransform& t);
WarpResult warp_image(const Tensor<float>& img, const PlanarWarp& w);

/// Mask in frame A of pixels whose image under the warp lands inside frame B.
Tensor<float> source_validity_mask(const RotTransform& t);

} // namespace rekd
