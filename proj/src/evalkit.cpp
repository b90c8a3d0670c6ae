#include "rekd/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "rekd/image_io.hpp"
#include "rekd/log.hpp"
#include "rekd/parallel.hpp"

namespace rekd {

namespace {

bool inside(Point2 p, int w, int h, double border)
{
    return p.x >= border && p.y >= border && p.x <= w - 1 - border && p.y <= h - 1 - border;
}

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

} // namespace

double repeatability(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, const PlanarWarp& warp,
                     const RepeatabilityOptions& opts)
{
    std::vector<Point2> pa, pb;  // both in frame A
    for (const auto& k : a)
        if (inside(warp.forward({k.x, k.y}), warp.b_width(), warp.b_height(), opts.border_px)) pa.push_back({k.x, k.y});
    for (const auto& k : b) {
        const Point2 q = warp.inverse({k.x, k.y});
        if (inside(q, warp.a_width(), warp.a_height(), opts.border_px)) pb.push_back(q);
    }
    if (pa.empty() || pb.empty()) {
        if (a.empty() && b.empty()) log().warn("repeatability of two empty keypoint lists is defined as 0");
        return 0.0;
    }
    struct Cand {
        double d;
        int i, j;
    };
    std::vector<Cand> cands;
    for (int i = 0; i < int(pa.size()); ++i)
        for (int j = 0; j < int(pb.size()); ++j) {
            const double d = dist(pa[i], pb[j]);
            if (d <= opts.threshold_px) cands.push_back({d, i, j});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.d != y.d) return x.d < y.d;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    std::vector<char> used_a(pa.size(), 0), used_b(pb.size(), 0);
    int matched = 0;
    for (const auto& c : cands)
        if (!used_a[c.i] && !used_b[c.j]) {
            used_a[c.i] = used_b[c.j] = 1;
            ++matched;
        }
    return double(matched) / double(std::min(pa.size(), pb.size()));
}

double repeatability(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, const RotTransform& t,
                     const RepeatabilityOptions& opts)
{
    return repeatability(a, b, t.planar(), opts);
}

std::vector<double> mma(const std::vector<Match>& matches, const std::vector<Keypoint>& a,
                        const std::vector<Keypoint>& b, const PlanarWarp& warp, const std::vector<double>& thresholds,
                        bool inliers_only)
{
    std::vector<double> acc(thresholds.size(), 0.0);
    int total = 0;
    for (const auto& m : matches) {
        if (inliers_only && !m.inlier) continue;
        ++total;
        const Point2 q = warp.inverse({b.at(m.b).x, b.at(m.b).y});
        const double d = dist(q, {a.at(m.a).x, a.at(m.a).y});
        for (std::size_t k = 0; k < thresholds.size(); ++k) acc[k] += d <= thresholds[k];
    }
    if (total == 0) return acc;
    for (auto& v : acc) v /= total;
    return acc;
}

std::vector<double> mma(const std::vector<Match>& matches, const std::vector<Keypoint>& a,
                        const std::vector<Keypoint>& b, const RotTransform& t, const std::vector<double>& thresholds,
                        bool inliers_only)
{
    return mma(matches, a, b, t.planar(), thresholds, inliers_only);
}

double orientation_accuracy(const Tensor<float>& o_a, const Tensor<float>& o_b, const RotTransform& t,
                            const Tensor<float>& mask_a, double threshold_deg)
{
    if (o_a.rank() != 3 || o_b.rank() != 3 || o_a.dim(0) != o_b.dim(0))
        throw Error(ErrorCode::shape_mismatch, "orientation_accuracy expects two [G,H,W] maps");
    const int G = o_a.dim(0), h = o_a.dim(1), w = o_a.dim(2);
    const Tensor<float> b_al = WarpSampler(t.inverse()).apply(o_b);
    if (b_al.dim(1) != h || b_al.dim(2) != w || mask_a.dim(0) != h || mask_a.dim(1) != w)
        throw Error(ErrorCode::shape_mismatch, "orientation_accuracy: frame sizes disagree");
    const std::size_t plane = std::size_t(h) * w;
    const double bin = 360.0 / G;
    std::size_t n = 0, correct = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (!(mask_a[p] > 0.5f)) continue;
        int ga = 0, gb = 0;
        for (int g = 1; g < G; ++g) {
            if (o_a[g * plane + p] > o_a[ga * plane + p]) ga = g;
            if (b_al[g * plane + p] > b_al[gb * plane + p]) gb = g;
        }
        const double predicted = std::fmod((gb - ga + G) * bin, 360.0);
        ++n;
        correct += circular_distance_deg(predicted, t.angle_deg) <= threshold_deg + 1e-9;
    }
    if (n == 0) throw Error(ErrorCode::no_valid_region, "orientation accuracy mask is empty");
    return double(correct) / double(n);
}

namespace {

Tensor<float> noisy(const Tensor<float>& img, double sigma, std::mt19937_64& rng)
{
    if (sigma <= 0) return img;
    std::normal_distribution<double> nd(0.0, sigma);
    Tensor<float> out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = float(std::clamp(img[i] + nd(rng), 0.0, 1.0));
    return out;
}

} // namespace

std::vector<SweepRow> rotation_sweep(const Model<float>& model, const std::vector<Tensor<float>>& images,
                                     const SweepOptions& opts)
{
    std::vector<double> angles = opts.angles;
    if (angles.empty())
        for (int a = 0; a < 360; ++a) angles.push_back(a);
    DetectOptions det;
    det.num_keypoints = opts.num_keypoints;
    RepeatabilityOptions rep;
    rep.threshold_px = opts.threshold_px;
    rep.border_px = det.nms_window / 2 + 1;

    struct Source {
        Tensor<float> img;
        std::vector<Keypoint> kps;
        Tensor<float> O;
    };
    std::vector<Source> sources;
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::mt19937_64 rng(opts.seed * 1000003 + i);
        Source s;
        s.img = noisy(images[i], opts.noise_sigma, rng);
        s.kps = detect(model, s.img, det);
        s.O = model.forward(s.img).O;
        sources.push_back(std::move(s));
    }

    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < angles.size(); ++k) {
        SweepRow row;
        row.angle = angles[k];
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto& img = images[i];
            const auto t = RotTransform::about_center(angles[k], img.dim(1), img.dim(0));
            std::mt19937_64 rng(opts.seed * 1000003 + 7919 * (k + 1) + i);
            const Tensor<float> b = noisy(warp_image(img, t).image, opts.noise_sigma, rng);
            row.repeatability += repeatability(sources[i].kps, detect(model, b, det), t, rep);
            row.ori_accuracy +=
                orientation_accuracy(sources[i].O, model.forward(b).O, t, source_validity_mask(t), opts.ori_threshold_deg);
        }
        row.repeatability /= double(images.size());
        row.ori_accuracy /= double(images.size());
        log().debug("sweep angle {} rep {:.4f} ori {:.4f}", row.angle, row.repeatability, row.ori_accuracy);
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "angle,repeatability,ori_accuracy\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%g,%.6f,%.6f\n", r.angle, r.repeatability, r.ori_accuracy);
        out << buf;
    }
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

bool is_planar_scene(const std::string& dir)
{
    namespace fs = std::filesystem;
    return fs::exists(fs::path(dir) / "1.pgm") && fs::exists(fs::path(dir) / "H_1_2");
}

PlanarScene load_planar_scene(const std::string& dir)
{
    namespace fs = std::filesystem;
    PlanarScene scene;
    scene.name = fs::path(dir).filename().string();
    scene.images.push_back(read_pgm((fs::path(dir) / "1.pgm").string()));
    for (int k = 2; k <= 6; ++k) {
        const auto img_path = fs::path(dir) / (std::to_string(k) + ".pgm");
        const auto h_path = fs::path(dir) / ("H_1_" + std::to_string(k));
        if (!fs::exists(img_path) || !fs::exists(h_path)) break;
        scene.images.push_back(read_pgm(img_path.string()));
        std::ifstream in(h_path);
        std::array<double, 9> h{};
        for (auto& v : h)
            if (!(in >> v)) throw Error(ErrorCode::truncated, h_path.string() + " does not hold 9 numbers");
        const auto& a = scene.images.front();
        const auto& b = scene.images.back();
        scene.warps.emplace_back(h, a.dim(1), a.dim(0), b.dim(1), b.dim(0));
    }
    if (scene.warps.empty()) throw Error(ErrorCode::missing_file, dir + " has no image/homography pairs");
    return scene;
}

std::vector<PlanarScene> load_planar_scenes(const std::string& root)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw Error(ErrorCode::missing_file, "no such directory " + root);
    if (is_planar_scene(root)) return {load_planar_scene(root)};
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && is_planar_scene(e.path().string())) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    std::vector<PlanarScene> scenes;
    for (const auto& d : dirs) scenes.push_back(load_planar_scene(d));
    return scenes;
}

} // namespace rekd
