#pragma once

#include "rekd/geometry.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

/// Two grayscale images in [0,1] related by an in-plane rotation:
/// img_b is img_a warped by `t` (before photometric jitter).
struct RigidPair {
    Tensor<float> img_a;
    Tensor<float> img_b;
    RotTransform t;
    Tensor<float> mask;  // validity of the warp, frame B
};

} // namespace rekd
