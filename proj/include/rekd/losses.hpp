#pragma once

#include <vector>

#include "rekd/geometry.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

/// Non-overlapping N x N windows tiling the top-left floor(H/N) x floor(W/N)
/// cells of a map. Partial border windows are dropped.
struct WindowGrid {
    int size = 8;
    int rows = 0, cols = 0;

    WindowGrid(int window, int height, int width)
      : size(window), rows(height / window), cols(width / window)
    { }

    int count() const { return rows * cols; }
    int top(int i) const { return (i / cols) * size; }
    int left(int i) const { return (i % cols) * size; }
};

/// Per-window spatial softmax of K; pixels outside complete windows are 0.
template <typename T>
Tensor<T> window_softmax(const Tensor<T>& k, int window);

/// Adjoint of window_softmax given its output.
template <typename T>
Tensor<T> window_softmax_backward(const Tensor<T>& m, const Tensor<T>& grad, int window);

/// Softmax-weighted coordinate of each window, absolute image coordinates.
template <typename T>
std::vector<Point2> soft_coordinates(const Tensor<T>& m, int window);

/// Dense orientation alignment loss: cross-entropy between the bin-shifted
/// histograms of `o_a` and the spatially aligned histograms of `o_b`, mean
/// over pixels where `mask_a` (frame A) is set. `t` maps frame A onto frame B.
/// Gradients are written when the pointers are non-null.
template <typename T>
T orientation_alignment_loss(const Tensor<T>& o_a, const Tensor<T>& o_b, const RotTransform& t,
                             const Tensor<float>& mask_a, Tensor<T>* grad_a = nullptr, Tensor<T>* grad_b = nullptr);

/// Histogram shift (in bins) that aligns frame-A histograms with frame B.
int histogram_shift(double angle_deg, int group_order);

/// Index-proposal loss of one window size. Soft coordinates come from K_a,
/// hard argmax coordinates from K_b aligned into frame A. The window weight
/// alpha is the sum of the two window-softmax responses and is not
/// differentiated. Windows with no valid pixel are skipped. Gradient flows
/// into K_a only.
/// Window weights written by one evaluation and read back by later ones, so
/// finite differences see the same (non-differentiated) weights.
struct WeightTape {
    bool replay = false;
    std::vector<double> values;
    std::size_t cursor = 0;
    void rewind(bool replay_mode)
    {
        replay = replay_mode;
        cursor = 0;
        if (!replay) values.clear();
    }
};

template <typename T>
T ip_loss(const Tensor<T>& k_a, const Tensor<T>& k_b, const RotTransform& t, int window, const Tensor<float>& mask_a,
          Tensor<T>* grad_a = nullptr, int* surviving = nullptr, WeightTape* tape = nullptr);

struct KeypointLossConfig {
    std::vector<int> windows{8, 16, 24, 32, 40};
    std::vector<double> weights{256, 64, 16, 4, 1};
};

/// sum_l w_l * (ip(a, b, t, N_l) + ip(b, a, t^-1, N_l)).
template <typename T>
T keypoint_loss(const Tensor<T>& k_a, const Tensor<T>& k_b, const RotTransform& t, const KeypointLossConfig& cfg,
                Tensor<T>* grad_a = nullptr, Tensor<T>* grad_b = nullptr, WeightTape* tape = nullptr);

inline double total_loss(double l_ori, double l_kpts, double beta = 100.0) { return beta * l_ori + l_kpts; }

} // namespace rekd
