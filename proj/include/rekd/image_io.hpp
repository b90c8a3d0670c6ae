#pragma once

#include <string>

#include "rekd/tensor.hpp"

namespace rekd {

/// Binary 8-bit graymap (P5, maxval 255) to [H,W] floats in [0,1].
Tensor<float> read_pgm(const std::string& path);
/// Writes [H,W] values clamped to [0,1] and rounded to 8 bits.
void write_pgm(const std::string& path, const Tensor<float>& img);

/// 8-bit quantization used by write_pgm, applied in memory.
Tensor<float> quantize8(const Tensor<float>& img);

} // namespace rekd
