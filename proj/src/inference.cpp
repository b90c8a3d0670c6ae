#include "rekd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rekd/ops.hpp"

namespace rekd {

double pyramid_factor(int level) { return std::pow(std::sqrt(2.0), 2 - level); }

double pyramid_scale(int level) { return std::pow(std::sqrt(2.0), level - 2); }

std::pair<int, int> pyramid_size(int level, int h, int w)
{
    if (level == 2) return {h, w};
    const double f = pyramid_factor(level);
    return {std::max(1, int(std::lround(h * f))), std::max(1, int(std::lround(w * f)))};
}

std::vector<Tensor<float>> scale_pyramid(const Tensor<float>& img)
{
    if (img.rank() != 2) throw Error(ErrorCode::shape_mismatch, "scale_pyramid expects an [H,W] image");
    std::vector<Tensor<float>> levels;
    for (int s = 0; s < kPyramidLevels; ++s) {
        const auto [h, w] = pyramid_size(s, img.dim(0), img.dim(1));
        levels.push_back(bilinear_resize(img, h, w));
    }
    return levels;
}

std::vector<int> allocate_keypoints(int p)
{
    if (p < 0) throw Error(ErrorCode::invalid_argument, "keypoint budget must be non-negative");
    double total = 0;
    for (int s = 0; s < kPyramidLevels; ++s) total += std::pow(2.0, 2 - s);
    std::vector<int> n(kPyramidLevels);
    int sum = 0;
    for (int s = 0; s < kPyramidLevels; ++s) {
        n[s] = int(std::lround(p * std::pow(2.0, 2 - s) / total));
        sum += n[s];
    }
    n[0] += p - sum;
    return n;
}

int allocate_keypoints(int p, int level)
{
    if (level < 0 || level >= kPyramidLevels) throw Error(ErrorCode::invalid_argument, "pyramid level out of range");
    return allocate_keypoints(p)[level];
}

std::vector<Peak> nms(const Tensor<float>& score, int window)
{
    if (score.rank() != 2) throw Error(ErrorCode::shape_mismatch, "nms expects an [H,W] map");
    if (window < 1 || window % 2 == 0) throw Error(ErrorCode::invalid_argument, "nms window must be odd");
    const int h = score.dim(0), w = score.dim(1), r = window / 2;
    std::vector<Peak> peaks;
    if (h <= 2 * r || w <= 2 * r) return peaks;
    // Separable running max of the neighbourhood (clipped at the map edge).
    Tensor<float> rowmax({h, w}), boxmax({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float m = score(y, x);
            for (int d = std::max(0, x - r); d <= std::min(w - 1, x + r); ++d) m = std::max(m, score(y, d));
            rowmax(y, x) = m;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float m = rowmax(y, x);
            for (int d = std::max(0, y - r); d <= std::min(h - 1, y + r); ++d) m = std::max(m, rowmax(d, x));
            boxmax(y, x) = m;
        }
    for (int y = r; y < h - r; ++y)
        for (int x = r; x < w - r; ++x) {
            const float v = score(y, x);
            if (v < boxmax(y, x)) continue;
            // v is a maximum; it survives unless an equal value precedes it.
            bool first = true;
            for (int yy = y - r; yy <= y && first; ++yy)
                for (int xx = x - r; xx <= x + r; ++xx) {
                    if (yy == y && xx >= x) break;
                    if (score(yy, xx) == v) {
                        first = false;
                        break;
                    }
                }
            if (first) peaks.push_back({y, x, v});
        }
    return peaks;
}

namespace {

bool keypoint_order(const Keypoint& a, const Keypoint& b)
{
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
}

} // namespace

std::vector<Keypoint> detect(const Model<float>& model, const Tensor<float>& img, const DetectOptions& opts)
{
    if (img.rank() != 2) throw Error(ErrorCode::shape_mismatch, "detect expects an [H,W] image");
    const int H = img.dim(0), W = img.dim(1), G = model.group_order();
    const auto budget = allocate_keypoints(opts.num_keypoints);
    const int min_side = std::max(opts.nms_window, model.min_input_size());
    std::vector<Keypoint> all;
    for (int s = 0; s < kPyramidLevels; ++s) {
        if (budget[s] == 0) continue;
        const auto [h, w] = pyramid_size(s, H, W);
        if (std::min(h, w) < min_side) continue;
        const Tensor<float> level = s == 2 ? img : bilinear_resize(img, h, w);
        const ModelOutput<float> out = model.forward(level);
        std::vector<Peak> peaks = nms(out.K, opts.nms_window);
        std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
        if (int(peaks.size()) > budget[s]) peaks.resize(budget[s]);
        const double sx = double(W) / w, sy = double(H) / h;
        const std::size_t plane = std::size_t(h) * w;
        for (const Peak& p : peaks) {
            int best = 0;
            const std::size_t at = std::size_t(p.y) * w + p.x;
            for (int g = 1; g < G; ++g)
                if (out.O[g * plane + at] > out.O[best * plane + at]) best = g;
            Keypoint kp;
            kp.x = std::clamp((p.x + 0.5) * sx - 0.5, 0.0, W - 1.0);
            kp.y = std::clamp((p.y + 0.5) * sy - 0.5, 0.0, H - 1.0);
            kp.score = p.score;
            kp.scale = pyramid_scale(s);
            kp.orientation_deg = best * 360.0 / G;
            all.push_back(kp);
        }
    }
    std::sort(all.begin(), all.end(), keypoint_order);
    if (int(all.size()) > opts.num_keypoints) all.resize(opts.num_keypoints);
    return all;
}

void write_keypoints(const std::string& path, const std::vector<Keypoint>& kps, int width, int height)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "REKD-KPTS v1 " << width << " " << height << " " << kps.size() << "\n";
    char buf[160];
    for (const auto& k : kps) {
        std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f\n", k.x, k.y, k.score, k.scale, k.orientation_deg);
        out << buf;
    }
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

std::vector<Keypoint> read_keypoints(const std::string& path, int* width, int* height)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::missing_file, "cannot open keypoint file " + path);
    std::string magic, version;
    int w = 0, h = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version >> w >> h >> count) || magic != "REKD-KPTS" || version != "v1")
        throw Error(ErrorCode::bad_magic, path + " is not a REKD-KPTS v1 file");
    std::vector<Keypoint> kps(count);
    for (auto& k : kps)
        if (!(in >> k.x >> k.y >> k.score >> k.scale >> k.orientation_deg))
            throw Error(ErrorCode::truncated, path + " has fewer keypoints than its header states");
    if (width) *width = w;
    if (height) *height = h;
    return kps;
}

} // namespace rekd
