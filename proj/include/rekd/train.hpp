#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rekd/model.hpp"
#include "rekd/pair.hpp"

namespace rekd {

struct EpochReport {
    int epoch = 0;  // 1-based
    double lr = 0;
    StepLosses loss;  // mean over the epoch's steps
    std::optional<double> val_repeatability;
    double seconds = 0;
};

struct TrainOptions {
    int val_keypoints = 300;
    int max_val_pairs = 50;
    std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
    Model<float> best;
    Model<float> last;
    int best_epoch = 0;
    std::vector<EpochReport> history;
};

/// Adam with step decay; shuffles the training pairs every epoch with a
/// seed derived from the config. Keeps the model with the highest
/// validation repeatability (the last one when there is no validation set).
TrainResult train(const RekdConfig& cfg, const std::vector<RigidPair>& train_pairs,
                  const std::vector<RigidPair>& val_pairs, const TrainOptions& opts = {});

/// Mean repeatability of detections on both images of each pair.
double validation_repeatability(const Model<float>& model, const std::vector<RigidPair>& pairs, int num_keypoints);

} // namespace rekd
