#include "rekd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "rekd/evalkit.hpp"
#include "rekd/inference.hpp"
#include "rekd/log.hpp"

namespace rekd {

double validation_repeatability(const Model<float>& model, const std::vector<RigidPair>& pairs, int num_keypoints)
{
    if (pairs.empty()) return 0;
    DetectOptions det;
    det.num_keypoints = num_keypoints;
    RepeatabilityOptions rep;
    rep.border_px = det.nms_window / 2 + 1;
    double acc = 0;
    for (const auto& p : pairs) acc += repeatability(detect(model, p.img_a, det), detect(model, p.img_b, det), p.t, rep);
    return acc / double(pairs.size());
}

TrainResult train(const RekdConfig& cfg, const std::vector<RigidPair>& train_pairs,
                  const std::vector<RigidPair>& val_pairs, const TrainOptions& opts)
{
    if (train_pairs.empty()) throw Error(ErrorCode::invalid_argument, "no training pairs");
    cfg.validate();
    Model<float> model(cfg);
    AdamState optimizer;
    optimizer.lr = cfg.lr;
    const std::vector<RigidPair> val(val_pairs.begin(),
                                     val_pairs.begin() + std::min<std::size_t>(val_pairs.size(), opts.max_val_pairs));

    TrainResult result{model, model, 0, {}};
    double best_rep = -1;
    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        optimizer.lr = cfg.lr * std::pow(cfg.lr_decay, (epoch - 1) / cfg.lr_decay_every);
        std::mt19937_64 rng(cfg.seed * 7919 + epoch);
        std::shuffle(order.begin(), order.end(), rng);

        EpochReport report;
        report.epoch = epoch;
        report.lr = optimizer.lr;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::vector<RigidPair> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i)
                batch.push_back(train_pairs[order[i]]);
            const StepLosses l = train_step(model, batch, optimizer);
            report.loss.total += l.total;
            report.loss.ori += l.ori;
            report.loss.kpts += l.kpts;
            ++steps;
            log().debug("epoch {} step {} loss {:.4f} (ori {:.4f}, kpts {:.4f})", epoch, steps, l.total, l.ori, l.kpts);
        }
        report.loss.total /= steps;
        report.loss.ori /= steps;
        report.loss.kpts /= steps;

        bool improved = val.empty();
        if (!val.empty()) {
            report.val_repeatability = validation_repeatability(model, val, opts.val_keypoints);
            improved = *report.val_repeatability > best_rep;
            if (improved) best_rep = *report.val_repeatability;
        }
        if (improved) {
            result.best = model;
            result.best_epoch = epoch;
        }
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log().info("epoch {}/{} lr {:.2e} loss {:.4f} (ori {:.4f}, kpts {:.4f}) val-rep {} in {:.1f}s", epoch, cfg.epochs,
                   report.lr, report.loss.total, report.loss.ori, report.loss.kpts,
                   report.val_repeatability ? fmt::format("{:.4f}", *report.val_repeatability) : "n/a",
                   report.seconds);
        result.history.push_back(report);
        if (opts.on_epoch) opts.on_epoch(report);
    }
    result.last = std::move(model);
    return result;
}

} // namespace rekd
