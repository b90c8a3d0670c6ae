#pragma once

#include <string>
#include <vector>

#include "rekd/model.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

struct Keypoint {
    double x = 0, y = 0;  // original image frame
    double score = 0;
    double scale = 1;
    double orientation_deg = 0;
};

inline constexpr int kPyramidLevels = 8;
inline constexpr int kNmsWindow = 15;

/// Resize factor of level s relative to the input: sqrt(2)^(2-s).
double pyramid_factor(int level);
/// Scale value attached to keypoints of level s: sqrt(2)^(s-2).
double pyramid_scale(int level);
/// Level extents for an h x w image.
std::pair<int, int> pyramid_size(int level, int h, int w);
/// Eight bilinear resizes of an [H,W] image; level 2 is the input itself.
std::vector<Tensor<float>> scale_pyramid(const Tensor<float>& img);

/// Budget of level s out of p keypoints, weights 2^(2-s) normalized over the
/// eight levels; rounding leftovers go to level 0 so the budgets sum to p.
int allocate_keypoints(int p, int level);
std::vector<int> allocate_keypoints(int p);

struct Peak {
    int y = 0, x = 0;
    float score = 0;
};

/// Pixels that are the strict maximum of their window x window neighbourhood
/// (equal values: the lowest row-major index wins), excluding a border of
/// window/2. Row-major order.
std::vector<Peak> nms(const Tensor<float>& score, int window = kNmsWindow);

struct DetectOptions {
    int num_keypoints = 300;
    int nms_window = kNmsWindow;
};

/// Keypoints over the pyramid, sorted by score (then y, x); at most p.
std::vector<Keypoint> detect(const Model<float>& model, const Tensor<float>& img, const DetectOptions& opts = {});

/// "REKD-KPTS v1 W H count" text format.
void write_keypoints(const std::string& path, const std::vector<Keypoint>& kps, int width, int height);
std::vector<Keypoint> read_keypoints(const std::string& path, int* width = nullptr, int* height = nullptr);

} // namespace rekd
