#pragma once

#include <string>
#include <vector>

#include "rekd/geometry.hpp"
#include "rekd/inference.hpp"
#include "rekd/matching.hpp"
#include "rekd/model.hpp"

namespace rekd {

struct RepeatabilityOptions {
    double threshold_px = 3.0;
    /// Keypoints whose position in the other frame lies closer than this to
    /// its border are not counted.
    double border_px = 0.0;
};

/// Keypoints of B are mapped into frame A; points that leave the other image
/// are dropped in both lists; pairs within the threshold are assigned
/// greedily by ascending distance (one-to-one). Returns
/// matched / min(|A valid|, |B valid|), 0 when either list is empty.
double repeatability(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, const PlanarWarp& warp,
                     const RepeatabilityOptions& opts = {});
double repeatability(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, const RotTransform& t,
                     const RepeatabilityOptions& opts = {});

/// Fraction of matches with |warp^-1(kp_b) - kp_a| <= threshold, per
/// threshold; 0 for an empty match list. Only matches flagged inlier count
/// when `inliers_only` is set.
std::vector<double> mma(const std::vector<Match>& matches, const std::vector<Keypoint>& a,
                        const std::vector<Keypoint>& b, const PlanarWarp& warp,
                        const std::vector<double>& thresholds = {3.0, 5.0}, bool inliers_only = false);
std::vector<double> mma(const std::vector<Match>& matches, const std::vector<Keypoint>& a,
                        const std::vector<Keypoint>& b, const RotTransform& t,
                        const std::vector<double>& thresholds = {3.0, 5.0}, bool inliers_only = false);

/// Fraction of pixels (mask_a set) whose relative orientation read from the
/// argmax bins of O_a and the spatially aligned O_b lies within
/// `threshold_deg` of the true angle.
double orientation_accuracy(const Tensor<float>& o_a, const Tensor<float>& o_b, const RotTransform& t,
                            const Tensor<float>& mask_a, double threshold_deg = 15.0);

struct SweepOptions {
    std::vector<double> angles;  // empty: 0..359 in 1 degree steps
    double noise_sigma = 4.0 / 255.0;
    int num_keypoints = 300;
    double threshold_px = 3.0;
    double ori_threshold_deg = 15.0;
    std::uint64_t seed = 1;
};

struct SweepRow {
    double angle = 0;
    double repeatability = 0;
    double ori_accuracy = 0;
};

/// Per angle: each image is rotated about its center, Gaussian noise is
/// added to both views, and repeatability and dense orientation accuracy are
/// averaged over the images.
std::vector<SweepRow> rotation_sweep(const Model<float>& model, const std::vector<Tensor<float>>& images,
                                     const SweepOptions& opts = {});
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

/// One scene of an HPatches-style folder: 1.pgm..6.pgm and H_1_k files
/// (3x3 row-major homography from image 1 to image k).
struct PlanarScene {
    std::string name;
    std::vector<Tensor<float>> images;
    std::vector<PlanarWarp> warps;  // warps[k-2]: image 1 -> image k
};

bool is_planar_scene(const std::string& dir);
PlanarScene load_planar_scene(const std::string& dir);
/// `root` is a single scene or a directory of scenes.
std::vector<PlanarScene> load_planar_scenes(const std::string& root);

} // namespace rekd
