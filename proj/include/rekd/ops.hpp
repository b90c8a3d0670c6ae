#pragma once

#include <string>
#include <vector>

#include "rekd/tensor.hpp"

namespace rekd {

template <typename T>
struct ConvGrads {
    Tensor<T> input;   // empty when not requested
    Tensor<T> kernel;
};

/// Zero-padded 2D cross-correlation. `input` is [Cin,H,W] or [B,Cin,H,W],
/// `kernel` is [Cout,Cin,k,k]. Output keeps the batch rank of the input.
///
/// im2col + GEMM, parallel over (image, column block). Column blocks have a
/// fixed width so results do not depend on the worker count.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int padding, int stride = 1);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                             int padding, int stride = 1, bool need_input_grad = true);

/// Serial direct-sum kernels. Slow; kept as the reference the fast path is
/// tested and benchmarked against.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& input, const Tensor<T>& kernel, int padding, int stride = 1);

template <typename T>
ConvGrads<T> conv2d_backward_reference(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                                       int padding, int stride = 1);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Gradient passes where the forward *output* was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& grad, int axis);

/// Bilinear resize of the two trailing axes, half-pixel (align-corners=false)
/// sampling with edge clamping.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w);

/// Adjoint of bilinear_resize; returns a gradient shaped like the source.
template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad, int in_h, int in_w);

/// Batch norm over a group feature [B,G,C,H,W]. Statistics are pooled per
/// channel across batch, group and space, so the op commutes with cyclic
/// shifts of the group axis.
template <typename T>
class BatchNormGroup {
public:
    struct Cache {
        Tensor<T> xhat;
        std::vector<T> inv_std;
        bool training = false;
    };

    BatchNormGroup() = default;
    explicit BatchNormGroup(int channels);

    int channels() const { return static_cast<int>(gamma.size()); }

    Tensor<T> forward(const Tensor<T>& x, bool training, Cache* cache = nullptr);

    /// Returns d/dx; accumulates into grad_gamma / grad_beta.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& grad);

    Tensor<T> gamma, beta;
    Tensor<T> grad_gamma, grad_beta;
    Tensor<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update over a parameter list. Moments are kept in
/// double. Throws ErrorCode::numeric naming the parameter if a gradient is
/// not finite; no parameter is touched in that case.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               const std::vector<std::string>& names, AdamState& state);

} // namespace rekd
