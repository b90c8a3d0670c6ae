#include "rekd/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "rekd/geometry.hpp"
#include "rekd/parallel.hpp"

namespace rekd {

namespace {

double sample(const Tensor<float>& img, double x, double y)
{
    const int h = img.dim(0), w = img.dim(1);
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const double ax = x - x0, ay = y - y0;
    auto at = [&](int yy, int xx) -> double {
        return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : double(img(yy, xx));
    };
    return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) + ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
}

} // namespace

Descriptor patch_descriptor(const Tensor<float>& img, const Keypoint& kp, int side)
{
    if (img.rank() != 2) throw Error(ErrorCode::shape_mismatch, "patch_descriptor expects an [H,W] image");
    if (side < 2) throw Error(ErrorCode::invalid_argument, "descriptor side must be at least 2");
    // Same linear map as a rotation warp by the keypoint orientation, so a
    // rotated image with a correspondingly rotated orientation samples the
    // same physical points.
    const auto [c, s] = exact_cos_sin(kp.orientation_deg);
    const double half = (side - 1) * 0.5;
    Descriptor d;
    d.values.resize(std::size_t(side) * side);
    double mean = 0;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            const double dx = (j - half) * kp.scale, dy = (i - half) * kp.scale;
            const double v = sample(img, kp.x + c * dx + s * dy, kp.y - s * dx + c * dy);
            d.values[std::size_t(i) * side + j] = float(v);
            mean += v;
        }
    mean /= double(d.values.size());
    double norm = 0;
    std::vector<double> centered(d.values.size());
    for (std::size_t i = 0; i < centered.size(); ++i) {
        centered[i] = d.values[i] - mean;
        norm += centered[i] * centered[i];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
        std::fill(d.values.begin(), d.values.end(), 0.0f);
        d.valid = false;
        return d;
    }
    for (std::size_t i = 0; i < centered.size(); ++i) d.values[i] = float(centered[i] / norm);
    d.valid = true;
    return d;
}

std::vector<Descriptor> describe(const Tensor<float>& img, const std::vector<Keypoint>& kps, int side)
{
    std::vector<Descriptor> out(kps.size());
#pragma omp parallel for num_threads(parallel::thread_count())
    for (std::size_t i = 0; i < kps.size(); ++i) out[i] = patch_descriptor(img, kps[i], side);
    return out;
}

std::vector<Match> mnn_match(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b)
{
    const std::size_t na = a.size(), nb = b.size();
    std::vector<Match> matches;
    if (na == 0 || nb == 0) return matches;
    const std::size_t dim = a.front().values.size();
    for (const auto& d : a)
        if (d.values.size() != dim) throw Error(ErrorCode::shape_mismatch, "descriptor lengths differ");
    for (const auto& d : b)
        if (d.values.size() != dim) throw Error(ErrorCode::shape_mismatch, "descriptor lengths differ");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(na * nb, inf);
#pragma omp parallel for num_threads(parallel::thread_count())
    for (std::size_t i = 0; i < na; ++i) {
        if (!a[i].valid) continue;
        for (std::size_t j = 0; j < nb; ++j) {
            if (!b[j].valid) continue;
            double acc = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = double(a[i].values[k]) - double(b[j].values[k]);
                acc += d * d;
            }
            dist[i * nb + j] = std::sqrt(acc);
        }
    }
    std::vector<std::size_t> best_b(na, nb), best_a(nb, na);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            const double d = dist[i * nb + j];
            if (d == inf) continue;
            if (best_b[i] == nb || d < dist[i * nb + best_b[i]]) best_b[i] = j;
            if (best_a[j] == na || d < dist[best_a[j] * nb + j]) best_a[j] = i;
        }
    for (std::size_t i = 0; i < na; ++i) {
        const std::size_t j = best_b[i];
        if (j < nb && best_a[j] == i) matches.push_back({int(i), int(j), dist[i * nb + j], true});
    }
    return matches;
}

double orientation_difference(double ori_a, double ori_b)
{
    double d = std::fmod(ori_b - ori_a + 360.0, 360.0);
    if (d < 0) d += 360.0;
    return d;
}

double mode_of_differences(const std::vector<double>& ori_a, const std::vector<double>& ori_b,
                           const std::vector<Match>& matches, int group_order)
{
    if (group_order <= 0) throw Error(ErrorCode::invalid_argument, "group order must be positive");
    if (matches.empty()) return 0;
    const double bin = 360.0 / group_order;
    std::vector<int> counts(group_order, 0);
    for (const auto& m : matches) {
        const double d = orientation_difference(ori_a.at(m.a), ori_b.at(m.b));
        counts[int(std::lround(d / bin)) % group_order]++;
    }
    const auto it = std::max_element(counts.begin(), counts.end());
    return double(it - counts.begin()) * bin;
}

double circular_distance_deg(double a, double b)
{
    double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

std::vector<bool> orientation_outlier_filter(const std::vector<Match>& matches, const std::vector<double>& ori_a,
                                             const std::vector<double>& ori_b, int group_order, double threshold_deg)
{
    std::vector<bool> flags(matches.size());
    if (matches.empty()) return flags;
    const double mode = mode_of_differences(ori_a, ori_b, matches, group_order);
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const double d = orientation_difference(ori_a.at(matches[i].a), ori_b.at(matches[i].b));
        flags[i] = circular_distance_deg(mode, d) <= threshold_deg + 1e-9;
    }
    return flags;
}

void write_matches(const std::string& path, const std::vector<Match>& matches)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "REKD-MATCH v1 " << matches.size() << "\n";
    char buf[96];
    for (const auto& m : matches) {
        std::snprintf(buf, sizeof buf, "%d %d %.6f %d\n", m.a, m.b, m.distance, m.inlier ? 1 : 0);
        out << buf;
    }
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

std::vector<Match> read_matches(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::missing_file, "cannot open match file " + path);
    std::string magic, version;
    std::size_t count = 0;
    if (!(in >> magic >> version >> count) || magic != "REKD-MATCH" || version != "v1")
        throw Error(ErrorCode::bad_magic, path + " is not a REKD-MATCH v1 file");
    std::vector<Match> matches(count);
    for (auto& m : matches) {
        int flag = 0;
        if (!(in >> m.a >> m.b >> m.distance >> flag)) throw Error(ErrorCode::truncated, path + " is truncated");
        m.inlier = flag != 0;
    }
    return matches;
}

} // namespace rekd
