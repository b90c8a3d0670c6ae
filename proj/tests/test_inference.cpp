#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "rekd/equivariant.hpp"
#include "rekd/inference.hpp"
#include "support.hpp"

using namespace rekd;
namespace fs = std::filesystem;

namespace {

RekdConfig tiny_config(int G)
{
    RekdConfig cfg;
    cfg.group_order = G;
    cfg.channels = 2;
    cfg.seed = 17;
    return cfg;
}

// Scores with many exact ties: a few quantized levels.
TensorF quantized_map(int h, int w, int levels, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> d(0, levels - 1);
    TensorF s({h, w});
    for (auto& v : s.values()) v = float(d(rng));
    return s;
}

} // namespace

TEST_CASE("pyramid geometry")
{
    CHECK(pyramid_size(2, 192, 192) == std::pair{192, 192});
    CHECK(pyramid_size(4, 192, 192) == std::pair{96, 96});
    CHECK(pyramid_size(0, 192, 192) == std::pair{384, 384});
    CHECK(pyramid_scale(2) == 1.0);
    CHECK(pyramid_scale(4) == doctest::Approx(2.0));
    CHECK(pyramid_factor(0) == doctest::Approx(2.0));
    std::mt19937_64 rng(1);
    const TensorF img = rekd::testing::random_tensor({40, 52}, rng, 0, 1);
    const auto levels = scale_pyramid(img);
    REQUIRE(levels.size() == 8);
    CHECK(levels[2] == img);
    for (int s = 0; s < 8; ++s) {
        const auto [h, w] = pyramid_size(s, 40, 52);
        CHECK(levels[s].shape() == Shape{h, w});
    }
}

TEST_CASE("keypoint allocation")
{
    const auto n = allocate_keypoints(1000);
    CHECK(n == std::vector<int>{502, 251, 125, 63, 31, 16, 8, 4});
    CHECK(allocate_keypoints(0) == std::vector<int>(8, 0));
    for (int p = 0; p <= 10000; p += (p < 100 ? 1 : 37)) {
        const auto a = allocate_keypoints(p);
        int sum = 0;
        for (int s = 0; s < 8; ++s) {
            sum += a[s];
            CHECK(a[s] >= 0);
            CHECK(allocate_keypoints(p, s) == a[s]);
        }
        CHECK(sum == p);
    }
    CHECK_THROWS_AS(allocate_keypoints(-1), Error);
}

TEST_CASE("non-maximum suppression examples")
{
    TensorF one({40, 40});
    one(20, 17) = 3;
    const auto p = nms(one);
    REQUIRE(p.size() == 1);
    CHECK(p[0].y == 20);
    CHECK(p[0].x == 17);

    TensorF far({40, 60});
    far(20, 15) = 2;
    far(20, 35) = 1;
    CHECK(nms(far).size() == 2);
    // About 10 px apart on the diagonal: inside one 15 x 15 window.
    TensorF near({40, 60});
    near(16, 15) = 2;
    near(23, 22) = 1;
    const auto q = nms(near);
    REQUIRE(q.size() == 1);
    CHECK(q[0].x == 15);
    // 10 px apart along a row is beyond the half-width of 7.
    TensorF row({40, 60});
    row(20, 15) = 2;
    row(20, 25) = 1;
    CHECK(nms(row).size() == 2);

    // Spikes inside the 7 px border are never reported.
    TensorF edge({40, 40});
    edge(3, 20) = 5;
    CHECK(nms(edge).empty());
}

TEST_CASE("non-maximum suppression matches the all-pairs oracle")
{
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> size(10, 48), win(0, 3);
    for (int n = 0; n < 300; ++n) {
        const int window = 2 * win(rng) + 3;
        const TensorF s = n % 2 ? quantized_map(size(rng), size(rng), 4, rng)
                                : rekd::testing::random_tensor({size(rng), size(rng)}, rng);
        std::vector<std::pair<int, int>> got;
        for (const auto& pk : nms(s, window)) got.emplace_back(pk.y, pk.x);
        CAPTURE(n);
        CHECK(got == oracle::nms(s, window));
    }
}

TEST_CASE("detection contract")
{
    const Model<float> model(tiny_config(8));
    std::mt19937_64 rng(3);
    const TensorF img = rekd::testing::smooth_image(64, 64, rng);
    const auto a = detect(model, img, {300});
    const auto b = detect(model, img, {300});
    REQUIRE(!a.empty());
    CHECK(a.size() <= 300);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
        CHECK(a[i].orientation_deg == b[i].orientation_deg);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& k = a[i];
        CHECK(k.x >= 0);
        CHECK(k.x < 64);
        CHECK(k.y >= 0);
        CHECK(k.y < 64);
        CHECK(k.orientation_deg >= 0);
        CHECK(k.orientation_deg < 360);
        CHECK(std::fmod(k.orientation_deg, 45.0) == 0.0);
        if (i) CHECK(a[i - 1].score >= k.score);
        // Back to the level grid: an integer pixel within half a pixel.
        const int s = int(std::lround(2 * std::log2(k.scale))) + 2;
        const auto [h, w] = pyramid_size(s, 64, 64);
        const double u = (k.x + 0.5) * w / 64.0 - 0.5, v = (k.y + 0.5) * h / 64.0 - 0.5;
        CHECK(std::abs(u - std::round(u)) <= 0.5);
        CHECK(std::abs(v - std::round(v)) <= 0.5);
    }
    // Asking for more than exists returns what exists.
    const auto many = detect(model, img, {8000});
    CHECK(many.size() < 8000);
    CHECK(many.size() >= a.size());
}

TEST_CASE("quarter turns move keypoints and add 90 degrees to their orientation")
{
    const Model<float> model(tiny_config(8));
    std::mt19937_64 rng(4);
    const int n = 64;
    const TensorF img = rekd::testing::smooth_image(n, n, rng);
    const TensorF rot = rot90(img);
    const auto t = RotTransform::about_center(90, n, n);
    const auto ka = detect(model, img, {100});
    const auto kb = detect(model, rot, {100});
    int paired = 0;
    for (const auto& k : ka) {
        const Point2 p = t.forward({k.x, k.y});
        for (const auto& m : kb)
            if (std::abs(m.x - p.x) < 1e-6 && std::abs(m.y - p.y) < 1e-6 && m.scale == k.scale) {
                ++paired;
                CHECK(std::fmod(k.orientation_deg + 90.0, 360.0) == m.orientation_deg);
            }
    }
    MESSAGE(paired << " of " << ka.size() << " keypoints re-detected at the rotated position");
    CHECK(paired >= int(ka.size()) * 9 / 10);
}

TEST_CASE("keypoint files")
{
    const fs::path path = fs::temp_directory_path() / "rekd_test_kpts.txt";
    std::vector<Keypoint> kps{{1.5, 2.25, 0.125, 1.0, 90.0}, {10, 20, -3.5, 0.5, 350}};
    write_keypoints(path.string(), kps, 64, 48);
    int w = 0, h = 0;
    const auto back = read_keypoints(path.string(), &w, &h);
    CHECK(w == 64);
    CHECK(h == 48);
    REQUIRE(back.size() == 2);
    CHECK(back[0].x == 1.5);
    CHECK(back[1].orientation_deg == 350);
    CHECK(back[1].score == -3.5);
    std::ifstream in(path);
    std::string magic, version;
    int W, H, count;
    in >> magic >> version >> W >> H >> count;
    CHECK(magic == "REKD-KPTS");
    CHECK(version == "v1");
    CHECK(count == 2);
    fs::remove(path);
}
