#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "rekd/datagen.hpp"
#include "rekd/inference.hpp"
#include "rekd/model.hpp"
#include "rekd/train.hpp"

using namespace rekd;

TEST_CASE("200 steps on 50 pairs lower the loss by at least 30%")
{
    RekdConfig cfg;
    cfg.group_order = 8;
    cfg.channels = 2;
    cfg.batch = 4;
    cfg.seed = 3;
    const auto pairs = generate_pairs(50, 64, 21);
    auto model = make_model(cfg);
    AdamState optimizer;
    optimizer.lr = cfg.lr;
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
        std::vector<RigidPair> batch;
        for (int i = 0; i < cfg.batch; ++i) batch.push_back(pairs[(step * cfg.batch + i) % pairs.size()]);
        losses.push_back(train_step(model, batch, optimizer).total);
        REQUIRE(std::isfinite(losses.back()));
    }
    // Single steps are noisy; the tail is judged on its mean over the last
    // pass through the data (13 batches).
    const double tail = std::accumulate(losses.end() - 13, losses.end(), 0.0) / 13.0;
    MESSAGE("step-1 loss " << losses.front() << ", final mean " << tail);
    CHECK(tail <= 0.7 * losses.front());
}

TEST_CASE("training is reproducible and checkpoints round trip")
{
    RekdConfig cfg;
    cfg.group_order = 4;
    cfg.channels = 2;
    cfg.batch = 4;
    cfg.epochs = 2;
    const auto pairs = generate_pairs(8, 48, 5);
    const auto a = train(cfg, pairs, {}), b = train(cfg, pairs, {});
    CHECK(a.history.back().loss.total == b.history.back().loss.total);
    const auto sa = a.last.state(), sb = b.last.state();
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        REQUIRE(sa[i].second->values().size() == sb[i].second->values().size());
        CHECK(std::equal(sa[i].second->values().begin(), sa[i].second->values().end(), sb[i].second->values().begin()));
    }

    const auto path = (std::filesystem::temp_directory_path() / "rekd_test_ckpt.bin").string();
    save_checkpoint(a.last, path);
    const Model<float> back = load_checkpoint(path);
    CHECK(back.config() == cfg);
    const auto img = pairs[0].img_a;
    DetectOptions det;
    det.num_keypoints = 30;
    const auto ka = detect(a.last, img, det), kb = detect(back, img, det);
    REQUIRE(ka.size() == kb.size());
    for (std::size_t i = 0; i < ka.size(); ++i) {
        CHECK(ka[i].x == kb[i].x);
        CHECK(ka[i].score == kb[i].score);
        CHECK(ka[i].orientation_deg == kb[i].orientation_deg);
    }

    RekdConfig other = cfg;
    other.channels = 3;
    CHECK_THROWS_AS(load_checkpoint(path, other), Error);
    std::filesystem::remove(path);
}
