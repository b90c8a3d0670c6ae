#include "rekd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rekd/geometry.hpp"
#include "rekd/image_io.hpp"
#include "rekd/parallel.hpp"

namespace rekd {

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Rgb {
    double r, g, b;
};

Rgb random_color(Rng& rng)
{
    return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
}

void blend(Tensor<float>& img, int y, int x, double alpha, const Rgb& c)
{
    if (alpha <= 0) return;
    const int n = img.dim(1) * img.dim(2);
    float* p = img.data() + std::size_t(y) * img.dim(2) + x;
    p[0] = float(p[0] * (1 - alpha) + c.r * alpha);
    p[n] = float(p[n] * (1 - alpha) + c.g * alpha);
    p[2 * n] = float(p[2 * n] * (1 - alpha) + c.b * alpha);
}

// Draws a shape given its signed distance (negative inside) over a bounding box.
template <typename Sdf>
void draw(Tensor<float>& img, double cx, double cy, double reach, const Rgb& c, Sdf&& sdf)
{
    const int h = img.dim(1), w = img.dim(2);
    const int x0 = std::max(0, int(std::floor(cx - reach - 1))), x1 = std::min(w - 1, int(std::ceil(cx + reach + 1)));
    const int y0 = std::max(0, int(std::floor(cy - reach - 1))), y1 = std::min(h - 1, int(std::ceil(cy + reach + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) blend(img, y, x, std::clamp(0.5 - sdf(x - cx, y - cy), 0.0, 1.0), c);
}

void gaussian_blur(Tensor<float>& img, double sigma)
{
    const int radius = int(std::ceil(3 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    const int planes = img.rank() == 3 ? img.dim(0) : 1, h = img.dim(-2), w = img.dim(-1);
    std::vector<float> tmp(std::size_t(h) * w);
    for (int c = 0; c < planes; ++c) {
        float* p = img.data() + std::size_t(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * p[y * w + std::clamp(x + i, 0, w - 1)];
                tmp[y * w + x] = float(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
                p[y * w + x] = float(acc);
            }
    }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v)
{
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    v = mx;
    s = mx > 0 ? d / mx : 0;
    if (d <= 0) {
        h = 0;
        return;
    }
    if (mx == r) h = 60 * std::fmod((g - b) / d, 6.0);
    else if (mx == g) h = 60 * ((b - r) / d + 2);
    else h = 60 * ((r - g) / d + 4);
    if (h < 0) h += 360;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b)
{
    const double c = v * s, hp = h / 60.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1)), m = v - c;
    double r1 = 0, g1 = 0, b1 = 0;
    switch (int(hp) % 6) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
    }
    r = r1 + m, g = g1 + m, b = b1 + m;
}

std::string pair_id(std::size_t i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

} // namespace

Tensor<float> texture_image(Rng& rng, int size)
{
    if (size < 8) throw Error(ErrorCode::invalid_argument, "texture size must be at least 8");
    Tensor<float> img({3, size, size});
    // Background: linear blend between two colors plus a slow cosine ripple.
    const Rgb c0 = random_color(rng), c1 = random_color(rng);
    const double dir = uniform(rng, 0, 2 * std::numbers::pi);
    const double fx = uniform(rng, -1.5, 1.5) * 2 * std::numbers::pi / size, fy = uniform(rng, -1.5, 1.5) * 2 * std::numbers::pi / size;
    const double ripple = uniform(rng, 0, 0.15), phase = uniform(rng, 0, 2 * std::numbers::pi);
    const std::size_t plane = std::size_t(size) * size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = ((x - size / 2.0) * std::cos(dir) + (y - size / 2.0) * std::sin(dir)) / size + 0.5;
            const double t = std::clamp(u, 0.0, 1.0);
            const double r = ripple * std::cos(fx * x + fy * y + phase);
            const std::size_t i = std::size_t(y) * size + x;
            img[i] = float(c0.r * (1 - t) + c1.r * t + r);
            img[plane + i] = float(c0.g * (1 - t) + c1.g * t + r);
            img[2 * plane + i] = float(c0.b * (1 - t) + c1.b * t + r);
        }

    const int shapes = std::uniform_int_distribution<int>(20, 60)(rng);
    const double scale = size / 192.0;
    for (int s = 0; s < shapes; ++s) {
        const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
        const double cx = uniform(rng, 0, size), cy = uniform(rng, 0, size);
        const Rgb c = random_color(rng);
        if (kind == 0) {
            const double hw = uniform(rng, 3, 28) * scale, hh = uniform(rng, 3, 28) * scale;
            const double a = uniform(rng, 0, std::numbers::pi), ca = std::cos(a), sa = std::sin(a);
            draw(img, cx, cy, std::hypot(hw, hh), c, [=](double dx, double dy) {
                const double u = std::abs(ca * dx + sa * dy) - hw, v = std::abs(-sa * dx + ca * dy) - hh;
                return std::hypot(std::max(u, 0.0), std::max(v, 0.0)) + std::min(std::max(u, v), 0.0);
            });
        } else if (kind == 1) {
            const double r = uniform(rng, 3, 24) * scale;
            draw(img, cx, cy, r, c, [=](double dx, double dy) { return std::hypot(dx, dy) - r; });
        } else {
            const double len = uniform(rng, 10, 60) * scale, half = uniform(rng, 0.8, 3.0) * scale;
            const double a = uniform(rng, 0, std::numbers::pi), ca = std::cos(a), sa = std::sin(a);
            draw(img, cx, cy, len / 2 + half, c, [=](double dx, double dy) {
                const double along = std::clamp(ca * dx + sa * dy, -len / 2, len / 2);
                return std::hypot(dx - along * ca, dy - along * sa) - half;
            });
        }
    }
    gaussian_blur(img, 0.7);
    for (auto& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

JitterParams sample_jitter(Rng& rng, const JitterRanges& r)
{
    JitterParams p;
    p.contrast = uniform(rng, r.contrast_lo, r.contrast_hi);
    p.brightness = uniform(rng, r.brightness_lo, r.brightness_hi);
    p.hue_deg = uniform(rng, r.hue_lo_deg, r.hue_hi_deg);
    return p;
}

Tensor<float> photometric_jitter(const Tensor<float>& img, const JitterParams& p)
{
    Tensor<float> out(img.shape());
    if (img.rank() == 2) {
        for (std::size_t i = 0; i < img.size(); ++i)
            out[i] = float(std::clamp(img[i] * p.contrast + p.brightness, 0.0, 1.0));
        return out;
    }
    if (img.rank() != 3 || img.dim(0) != 3) throw Error(ErrorCode::shape_mismatch, "jitter expects [3,H,W] or [H,W]");
    const std::size_t n = std::size_t(img.dim(1)) * img.dim(2);
    for (std::size_t i = 0; i < n; ++i) {
        double h, s, v;
        rgb_to_hsv(img[i], img[n + i], img[2 * n + i], h, s, v);
        h = std::fmod(h + p.hue_deg + 360.0, 360.0);
        v = std::clamp(v * p.contrast + p.brightness, 0.0, 1.0);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out[i] = float(std::clamp(r, 0.0, 1.0));
        out[n + i] = float(std::clamp(g, 0.0, 1.0));
        out[2 * n + i] = float(std::clamp(b, 0.0, 1.0));
    }
    return out;
}

Tensor<float> photometric_jitter(const Tensor<float>& img, Rng& rng, const JitterRanges& ranges)
{
    return photometric_jitter(img, sample_jitter(rng, ranges));
}

Tensor<float> to_gray(const Tensor<float>& img)
{
    if (img.rank() == 2) return img;
    if (img.rank() != 3 || img.dim(0) != 3) throw Error(ErrorCode::shape_mismatch, "to_gray expects [3,H,W]");
    const int h = img.dim(1), w = img.dim(2);
    const std::size_t n = std::size_t(h) * w;
    Tensor<float> g({h, w});
    for (std::size_t i = 0; i < n; ++i) g[i] = 0.299f * img[i] + 0.587f * img[n + i] + 0.114f * img[2 * n + i];
    return g;
}

double sobel_mean_magnitude(const Tensor<float>& g)
{
    if (g.rank() != 2) throw Error(ErrorCode::shape_mismatch, "sobel expects an [H,W] image");
    const int h = g.dim(0), w = g.dim(1);
    if (h < 3 || w < 3) return 0;
    double acc = 0;
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const double gx = (g(y - 1, x + 1) + 2 * g(y, x + 1) + g(y + 1, x + 1)) -
                              (g(y - 1, x - 1) + 2 * g(y, x - 1) + g(y + 1, x - 1));
            const double gy = (g(y + 1, x - 1) + 2 * g(y + 1, x) + g(y + 1, x + 1)) -
                              (g(y - 1, x - 1) + 2 * g(y - 1, x) + g(y - 1, x + 1));
            acc += std::hypot(gx, gy);
        }
    return acc / (double(h - 2) * (w - 2));
}

bool edge_filter_accept(const Tensor<float>& gray, double threshold) { return sobel_mean_magnitude(gray) >= threshold; }

GeneratedPair synth_pair(Rng& rng, const PairOptions& opts)
{
    Tensor<float> color;
    for (int attempt = 0;; ++attempt) {
        color = texture_image(rng, opts.size);
        if (edge_filter_accept(to_gray(color), opts.edge_threshold)) break;
        if (attempt == 1000) throw Error(ErrorCode::invalid_argument, "edge threshold rejects every texture");
    }
    const double angle = uniform(rng, -180.0, 180.0);
    const auto t = RotTransform::about_center(angle, opts.size, opts.size);
    WarpResult warped = warp_image(color, t);
    JitterParams ja, jb;
    if (opts.jitter_enabled) {
        ja = sample_jitter(rng, opts.jitter);
        jb = sample_jitter(rng, opts.jitter);
    }
    GeneratedPair out;
    out.clean_a = to_gray(color);
    out.clean_b = to_gray(warped.image);
    out.pair.img_a = to_gray(photometric_jitter(color, ja));
    out.pair.img_b = to_gray(photometric_jitter(warped.image, jb));
    out.pair.t = t;
    out.pair.mask = std::move(warped.mask);
    return out;
}

std::uint64_t pair_seed(std::uint64_t dataset_seed, std::size_t index)
{
    // splitmix64 finalizer over the combined key
    std::uint64_t z = dataset_seed * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

RigidPair quantized(RigidPair p)
{
    p.img_a = quantize8(p.img_a);
    p.img_b = quantize8(p.img_b);
    return p;
}

std::string format_transform(const RotTransform& t)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g %d %d %d %d\n", t.angle_deg, t.src_w, t.src_h, t.dst_w, t.dst_h);
    return buf;
}

} // namespace

std::vector<RigidPair> generate_pairs(int n_pairs, int size, std::uint64_t seed, std::size_t first_index)
{
    std::vector<RigidPair> pairs(n_pairs);
    PairOptions opts;
    opts.size = size;
#pragma omp parallel for schedule(dynamic) num_threads(parallel::thread_count())
    for (int i = 0; i < n_pairs; ++i) {
        Rng rng(pair_seed(seed, first_index + i));
        pairs[i] = quantized(synth_pair(rng, opts).pair);
    }
    return pairs;
}

std::vector<DatasetEntry> make_dataset(int n_pairs, int size, std::uint64_t seed, const std::string& dir)
{
    if (n_pairs < 0) throw Error(ErrorCode::invalid_argument, "pair count must be non-negative");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw Error(ErrorCode::io, "cannot create directory " + dir);
    std::vector<DatasetEntry> entries(n_pairs);
    PairOptions opts;
    opts.size = size;
    std::vector<std::string> failures(n_pairs);
#pragma omp parallel for schedule(dynamic) num_threads(parallel::thread_count())
    for (int i = 0; i < n_pairs; ++i) {
        try {
            Rng rng(pair_seed(seed, i));
            const GeneratedPair g = synth_pair(rng, opts);
            const std::string base = (std::filesystem::path(dir) / pair_id(i)).string();
            write_pgm(base + "_a.pgm", g.pair.img_a);
            write_pgm(base + "_b.pgm", g.pair.img_b);
            write_pgm(base + "_m.pgm", g.pair.mask);
            std::ofstream t(base + "_t.txt", std::ios::trunc);
            t << format_transform(g.pair.t);
            if (!t) throw Error(ErrorCode::io, "cannot write " + base + "_t.txt");
            entries[i] = {pair_id(i), i % 10 == 9};
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    }
    for (const auto& f : failures)
        if (!f.empty()) throw Error(ErrorCode::io, f);
    std::ofstream manifest(std::filesystem::path(dir) / "manifest.txt", std::ios::trunc);
    manifest << "# REKD-PAIRS v1 size " << size << " seed " << seed << " count " << n_pairs << "\n";
    for (const auto& e : entries) manifest << e.id << " " << (e.validation ? "val" : "train") << "\n";
    if (!manifest) throw Error(ErrorCode::io, "cannot write manifest in " + dir);
    return entries;
}

std::vector<DatasetEntry> read_manifest(const std::string& dir)
{
    const auto path = std::filesystem::path(dir) / "manifest.txt";
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::missing_file, "no manifest at " + path.string());
    std::vector<DatasetEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        DatasetEntry e;
        std::string split;
        if (!(is >> e.id >> split) || (split != "train" && split != "val"))
            throw Error(ErrorCode::invalid_argument, "malformed manifest line '" + line + "'");
        e.validation = split == "val";
        entries.push_back(e);
    }
    return entries;
}

RigidPair load_pair(const std::string& dir, const std::string& id)
{
    const std::string base = (std::filesystem::path(dir) / id).string();
    RigidPair p;
    p.img_a = read_pgm(base + "_a.pgm");
    p.img_b = read_pgm(base + "_b.pgm");
    p.mask = read_pgm(base + "_m.pgm");
    std::ifstream t(base + "_t.txt");
    if (!t) throw Error(ErrorCode::missing_file, "no transform file for pair " + id);
    if (!(t >> p.t.angle_deg >> p.t.src_w >> p.t.src_h >> p.t.dst_w >> p.t.dst_h))
        throw Error(ErrorCode::truncated, "malformed transform file for pair " + id);
    return p;
}

std::vector<RigidPair> load_split(const std::string& dir, bool validation)
{
    std::vector<RigidPair> pairs;
    for (const auto& e : read_manifest(dir))
        if (e.validation == validation) pairs.push_back(load_pair(dir, e.id));
    return pairs;
}

} // namespace rekd
