#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rekd/pair.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

using Rng = std::mt19937_64;

/// Procedural color texture [3,size,size] in [0,1]: a low-frequency
/// background under 20-60 anti-aliased rectangles, discs and lines, lightly
/// blurred.
Tensor<float> texture_image(Rng& rng, int size = 192);

struct JitterRanges {
    double contrast_lo = 0.7, contrast_hi = 1.3;
    double brightness_lo = -0.15, brightness_hi = 0.15;
    double hue_lo_deg = -30, hue_hi_deg = 30;
};

struct JitterParams {
    double contrast = 1.0;
    double brightness = 0.0;
    double hue_deg = 0.0;
};

JitterParams sample_jitter(Rng& rng, const JitterRanges& ranges = {});

/// In HSV: hue rotated, value scaled by contrast and offset by brightness,
/// then clamped to [0,1]. Accepts [3,H,W] color or [H,W] gray.
Tensor<float> photometric_jitter(const Tensor<float>& img, const JitterParams& p);
Tensor<float> photometric_jitter(const Tensor<float>& img, Rng& rng, const JitterRanges& ranges = {});

/// Luma of a [3,H,W] image; [H,W] input is returned unchanged.
Tensor<float> to_gray(const Tensor<float>& img);

/// Mean Sobel gradient magnitude over interior pixels of an [H,W] image.
double sobel_mean_magnitude(const Tensor<float>& gray);

/// Calibrated on 1000 texture seeds at 192 px; the generator clears it
/// almost always (about 1% of seeds fall below).
inline constexpr double kEdgeThreshold = 0.055;

bool edge_filter_accept(const Tensor<float>& gray, double threshold = kEdgeThreshold);

struct PairOptions {
    int size = 192;
    JitterRanges jitter;
    double edge_threshold = kEdgeThreshold;
    bool jitter_enabled = true;
};

/// A training pair plus the unjittered grayscale images.
struct GeneratedPair {
    RigidPair pair;
    Tensor<float> clean_a, clean_b;
};

/// Texture (redrawn until it passes the edge filter), uniform angle in
/// [-180,180), rotation about the center, independent jitter per image.
GeneratedPair synth_pair(Rng& rng, const PairOptions& opts = {});

/// Seed of the i-th pair of a dataset, independent of generation order.
std::uint64_t pair_seed(std::uint64_t dataset_seed, std::size_t index);

struct DatasetEntry {
    std::string id;
    bool validation = false;
};

/// Writes NNNN_{a,b,m}.pgm, NNNN_t.txt and manifest.txt into `dir`. Every
/// tenth pair is held out for validation.
std::vector<DatasetEntry> make_dataset(int n_pairs, int size, std::uint64_t seed, const std::string& dir);

std::vector<DatasetEntry> read_manifest(const std::string& dir);
RigidPair load_pair(const std::string& dir, const std::string& id);
/// All pairs of one split.
std::vector<RigidPair> load_split(const std::string& dir, bool validation);

/// In-memory pairs at the 8-bit precision the files would carry.
std::vector<RigidPair> generate_pairs(int n_pairs, int size, std::uint64_t seed, std::size_t first_index = 0);

} // namespace rekd
