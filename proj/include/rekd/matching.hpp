#pragma once

#include <string>
#include <vector>

#include "rekd/inference.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

struct Descriptor {
    std::vector<float> values;  // side*side, unit norm when valid
    bool valid = false;
};

/// Oriented square patch of side*scale pixels around the keypoint, sampled
/// bilinearly on a side x side grid in the keypoint's frame, mean-subtracted
/// and L2-normalized.
Descriptor patch_descriptor(const Tensor<float>& img, const Keypoint& kp, int side = 16);
std::vector<Descriptor> describe(const Tensor<float>& img, const std::vector<Keypoint>& kps, int side = 16);

struct Match {
    int a = 0, b = 0;
    double distance = 0;
    bool inlier = true;
};

/// Mutual nearest neighbours under L2 distance; ties go to the lower index.
/// Invalid descriptors never match. Sorted by index in A.
std::vector<Match> mnn_match(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b);

/// (o_b - o_a + 360) mod 360 for a match.
double orientation_difference(double ori_a, double ori_b);

/// Most frequent orientation difference over the matches, counted on a grid
/// of `group_order` bins; ties go to the smallest value. Empty input gives 0.
double mode_of_differences(const std::vector<double>& ori_a, const std::vector<double>& ori_b,
                           const std::vector<Match>& matches, int group_order);

double circular_distance_deg(double a, double b);

/// Inlier flag per match: circular distance between its orientation
/// difference and the modal difference is at most `threshold_deg`.
std::vector<bool> orientation_outlier_filter(const std::vector<Match>& matches, const std::vector<double>& ori_a,
                                             const std::vector<double>& ori_b, int group_order,
                                             double threshold_deg = 30.0);

/// "REKD-MATCH v1 count" then "i j distance inlier" lines.
void write_matches(const std::string& path, const std::vector<Match>& matches);
std::vector<Match> read_matches(const std::string& path);

} // namespace rekd
