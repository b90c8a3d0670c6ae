#pragma once

#include <vector>

#include "rekd/tensor.hpp"

namespace rekd {

/// Discrete rotation group C_N; element g is a rotation by g * 360/N degrees.
class CyclicGroup {
public:
    explicit CyclicGroup(int order);

    int order() const { return order_; }
    double bin_degrees() const { return 360.0 / order_; }
    double angle_deg(int g) const { return g * bin_degrees(); }
    int wrap(long g) const { return int(((g % order_) + order_) % order_); }
    /// Element nearest to a continuous angle.
    int nearest(double angle_deg) const;

private:
    int order_;
};

/// Bilinear rotation of k x k kernels for every group element, stored as a
/// sparse gather so the adjoint (gradient into the shared base kernel) is
/// exact. Multiples of 90 degrees are pure index permutations; for orders
/// divisible by 4 every element factors as (90-degree permutation) after
/// (residual bilinear rotation), so rotations differing by a quarter turn are
/// exact permutations of each other.
class KernelRotator {
public:
    KernelRotator(int order, int ksize);

    int order() const { return order_; }
    int ksize() const { return k_; }

    template <typename T>
    void rotate(const T* src, int g, T* dst) const;

    /// grad_src += R_g^T grad_dst
    template <typename T>
    void rotate_adjoint(const T* grad_dst, int g, T* grad_src) const;

private:
    struct Tap {
        int dst, src;
        double w;
    };
    int order_, k_;
    std::vector<std::vector<Tap>> taps_;
};

/// Rotates a single [k,k] kernel by group element g of C_order.
template <typename T>
Tensor<T> rotate_kernel(const Tensor<T>& kernel, int g, int order);

// Group features are [B,G,C,H,W] (rank 5) or [G,C,H,W] (rank 4, one image).

/// Lifting layer. base: [Cout,Cin,k,k]; img: [Cin,H,W] or [B,Cin,H,W].
/// out[g,c] = sum_cin conv2d(img[cin], rotate(base[c,cin], g)).
template <typename T>
Tensor<T> lift_conv(const Tensor<T>& img, const Tensor<T>& base, const KernelRotator& rot);

/// Full [G*Cout, Cin, k, k] filter bank used by lift_conv.
template <typename T>
Tensor<T> expand_lift_kernel(const Tensor<T>& base, const KernelRotator& rot);

/// Folds a filter-bank gradient back into the base kernel gradient.
template <typename T>
Tensor<T> fold_lift_kernel_grad(const Tensor<T>& bank_grad, const Shape& base_shape, const KernelRotator& rot);

/// Group convolution. base: [Cout, G*Cin, k, k]; input [B,G,Cin,H,W].
/// out[g,c] = sum_h sum_cin conv2d(in[h,cin], rotate(base[c, ((h-g) mod G)*Cin + cin], g)).
template <typename T>
Tensor<T> group_conv(const Tensor<T>& input, const Tensor<T>& base, const KernelRotator& rot);

template <typename T>
Tensor<T> expand_group_kernel(const Tensor<T>& base, const KernelRotator& rot);

template <typename T>
Tensor<T> fold_group_kernel_grad(const Tensor<T>& bank_grad, const Shape& base_shape, const KernelRotator& rot);

/// Max over the group axis: [B,G,C,H,W] -> [B,C,H,W]. Ties go to the lowest g.
template <typename T>
Tensor<T> group_pool_max(const Tensor<T>& h, std::vector<int>* argmax = nullptr);

template <typename T>
Tensor<T> group_pool_max_backward(const Tensor<T>& grad, const std::vector<int>& argmax, const Shape& input_shape);

/// Q[g] = sum_c w[c] * H[g,c]: [B,G,C,H,W] -> [B,G,H,W].
template <typename T>
Tensor<T> channel_pool(const Tensor<T>& h, const Tensor<T>& w);

/// Returns d/dH and accumulates d/dw into grad_w.
template <typename T>
Tensor<T> channel_pool_backward(const Tensor<T>& h, const Tensor<T>& w, const Tensor<T>& grad, Tensor<T>& grad_w);

/// out[g] = x[(g - k) mod G] along `axis` (the group axis).
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int k, int axis = 0);

/// Rotates the two trailing axes by a quarter turn counter-clockwise, q times
/// (same convention as warp_image at 90 degrees). Requires square planes.
template <typename T>
Tensor<T> rot90(const Tensor<T>& x, int q = 1);

} // namespace rekd
