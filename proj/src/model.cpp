#include "rekd/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace rekd {

// ---------------------------------------------------------------- config

void RekdConfig::validate() const
{
    auto positive = [](bool ok, const char* what) {
        if (!ok) throw Error(ErrorCode::invalid_argument, std::string("config: ") + what + " must be positive");
    };
    positive(group_order > 0, "group_order");
    positive(channels > 0, "channels");
    positive(layers > 0, "layers");
    positive(kernel > 0 && kernel % 2 == 1, "kernel (odd)");
    positive(padding >= 0, "padding");
    positive(scales > 0, "scales");
    positive(scale_factor > 0 && scale_factor <= 1, "scale_factor (<= 1)");
    positive(lr > 0, "lr");
    positive(batch > 0, "batch");
    positive(epochs > 0, "epochs");
    positive(lr_decay > 0, "lr_decay");
    positive(lr_decay_every > 0, "lr_decay_every");
    positive(beta >= 0, "beta");
    if (windows.size() != window_weights.size() || windows.empty())
        throw Error(ErrorCode::invalid_argument, "config: windows and window_weights must be non-empty and equal length");
    for (int w : windows) positive(w > 0, "window size");
}

namespace {

template <typename V>
std::string join(const std::vector<V>& v)
{
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

template <typename V>
std::vector<V> split_list(const std::string& s)
{
    std::vector<V> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(item);
        V v{};
        if (!(is >> v)) throw Error(ErrorCode::invalid_argument, "config: bad list item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

} // namespace

std::string RekdConfig::to_text() const
{
    std::ostringstream os;
    os.precision(17);
    os << "group_order=" << group_order << "\n"
       << "channels=" << channels << "\n"
       << "layers=" << layers << "\n"
       << "kernel=" << kernel << "\n"
       << "padding=" << padding << "\n"
       << "scales=" << scales << "\n"
       << "scale_factor=" << scale_factor << "\n"
       << "lr=" << lr << "\n"
       << "batch=" << batch << "\n"
       << "epochs=" << epochs << "\n"
       << "lr_decay=" << lr_decay << "\n"
       << "lr_decay_every=" << lr_decay_every << "\n"
       << "beta=" << beta << "\n"
       << "windows=" << join(windows) << "\n"
       << "window_weights=" << join(window_weights) << "\n"
       << "seed=" << seed << "\n";
    return os.str();
}

RekdConfig RekdConfig::from_text(const std::string& text)
{
    RekdConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::invalid_argument, "config: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        auto num = [&](auto& field) {
            std::istringstream is(val);
            if (!(is >> field)) throw Error(ErrorCode::invalid_argument, "config: bad value for " + key);
        };
        if (key == "group_order") num(cfg.group_order);
        else if (key == "channels") num(cfg.channels);
        else if (key == "layers") num(cfg.layers);
        else if (key == "kernel") num(cfg.kernel);
        else if (key == "padding") num(cfg.padding);
        else if (key == "scales") num(cfg.scales);
        else if (key == "scale_factor") num(cfg.scale_factor);
        else if (key == "lr") num(cfg.lr);
        else if (key == "batch") num(cfg.batch);
        else if (key == "epochs") num(cfg.epochs);
        else if (key == "lr_decay") num(cfg.lr_decay);
        else if (key == "lr_decay_every") num(cfg.lr_decay_every);
        else if (key == "beta") num(cfg.beta);
        else if (key == "windows") cfg.windows = split_list<int>(val);
        else if (key == "window_weights") cfg.window_weights = split_list<double>(val);
        else if (key == "seed") num(cfg.seed);
        else throw Error(ErrorCode::invalid_argument, "config: unknown key " + key);
    }
    cfg.validate();
    return cfg;
}

bool operator==(const RekdConfig& a, const RekdConfig& b) { return a.to_text() == b.to_text(); }

// ---------------------------------------------------------------- model

template <typename T>
Model<T>::Model(const RekdConfig& cfg)
  : cfg_(cfg), rot_(cfg.group_order, cfg.kernel)
{
    cfg_.validate();
    if (cfg_.padding != (cfg_.kernel - 1) / 2)
        throw Error(ErrorCode::invalid_argument, "config: padding must be (kernel-1)/2 to keep the spatial size");
    const int G = cfg_.group_order, C = cfg_.channels, k = cfg_.kernel;
    std::mt19937_64 rng(cfg_.seed);
    auto init = [&](Tensor<T>& t, double stddev) {
        std::normal_distribution<double> nd(0.0, stddev);
        for (auto& v : t.values()) v = T(nd(rng));
    };
    for (int l = 0; l < cfg_.layers; ++l) {
        const int fields = l == 0 ? 1 : G * C;
        conv.emplace_back(Shape{C, fields, k, k});
        init(conv.back(), std::sqrt(2.0 / (fields * k * k)));
        conv_grad.emplace_back(conv.back().shape());
        bn.emplace_back(C);
    }
    eta = Tensor<T>({C});
    init(eta, 1.0);
    rho = Tensor<T>({cfg_.scales * C});
    init(rho, 1.0 / std::sqrt(double(cfg_.scales * C)));
    rho_bias = Tensor<T>({1});
    eta_grad = Tensor<T>(eta.shape());
    rho_grad = Tensor<T>(rho.shape());
    rho_bias_grad = Tensor<T>(rho_bias.shape());
}

template <typename T>
std::vector<std::pair<int, int>> Model<T>::scale_sizes(int h, int w) const
{
    std::vector<std::pair<int, int>> sizes;
    for (int s = 0; s < cfg_.scales; ++s) {
        const double f = std::pow(cfg_.scale_factor, s);
        sizes.emplace_back(std::max(1, int(std::lround(h * f))), std::max(1, int(std::lround(w * f))));
    }
    const auto [ch, cw] = sizes.back();
    if (std::min(ch, cw) < 2 * cfg_.kernel)
        throw Error(ErrorCode::invalid_argument, "image " + std::to_string(h) + "x" + std::to_string(w) +
                                                     " is too small for the coarsest internal scale");
    return sizes;
}

template <typename T>
int Model<T>::min_input_size() const
{
    const double f = std::pow(cfg_.scale_factor, cfg_.scales - 1);
    int side = 1;
    while (std::lround(side * f) < 2 * cfg_.kernel) ++side;
    return side;
}

template <typename T>
void Model<T>::run(const Tensor<T>& images, bool training, Tensor<T>& K, Tensor<T>& O, Cache* cache,
                   ModelOutput<T>* internals)
{
    if (images.rank() != 4 || images.dim(1) != 1)
        throw Error(ErrorCode::shape_mismatch, "model input must be [B,1,H,W], got " + shape_string(images.shape()));
    const int B = images.dim(0), H = images.dim(2), W = images.dim(3);
    const int G = cfg_.group_order, C = cfg_.channels, S = cfg_.scales;
    const auto sizes = scale_sizes(H, W);
    const std::size_t plane = std::size_t(H) * W;

    Tensor<T> concat({B, S * C, H, W});
    Tensor<T> osum({B, G, H, W});
    if (cache) cache->scales.assign(S, {});
    if (internals) {
        internals->layer_outputs.assign(S, {});
        internals->P.clear();
        internals->Q.clear();
    }

    for (int s = 0; s < S; ++s) {
        const auto [h, w] = sizes[s];
        Tensor<T> x = bilinear_resize(images, h, w);
        Tensor<T> a;
        for (int l = 0; l < cfg_.layers; ++l) {
            Tensor<T> z = l == 0 ? lift_conv(x, conv[0], rot_) : group_conv(a, conv[l], rot_);
            typename BatchNormGroup<T>::Cache bc;
            a = relu(bn[l].forward(z, training, cache ? &bc : nullptr));
            if (cache) {
                cache->scales[s].bn.push_back(std::move(bc));
                cache->scales[s].act.push_back(a);
            }
            if (internals) internals->layer_outputs[s].push_back(a.reshaped({G, C, h, w}));
        }
        std::vector<int>* arg = cache ? &cache->scales[s].pool_arg : nullptr;
        const Tensor<T> P = group_pool_max(a, arg);
        const Tensor<T> Q = channel_pool(a, eta);
        if (internals) {
            internals->P.push_back(P.reshaped({C, h, w}));
            internals->Q.push_back(Q.reshaped({G, h, w}));
        }
        const Tensor<T> Pu = bilinear_resize(P, H, W);
        const Tensor<T> Qu = bilinear_resize(Q, H, W);
        for (int b = 0; b < B; ++b)
            std::copy_n(Pu.data() + std::size_t(b) * C * plane, C * plane,
                        concat.data() + (std::size_t(b) * S * C + s * C) * plane);
        osum += Qu;
        if (cache) {
            cache->scales[s].h = h;
            cache->scales[s].w = w;
            cache->scales[s].input = std::move(x);
        }
    }

    K = Tensor<T>({B, H, W});
    for (int b = 0; b < B; ++b) {
        T* k = K.data() + std::size_t(b) * plane;
        std::fill(k, k + plane, rho_bias[0]);
        for (int j = 0; j < S * C; ++j) {
            const T* src = concat.data() + (std::size_t(b) * S * C + j) * plane;
            const T r = rho[j];
            for (std::size_t i = 0; i < plane; ++i) k[i] += r * src[i];
        }
    }
    O = softmax(osum, 1);
    if (cache) {
        cache->concat = std::move(concat);
        cache->O = O;
    }
}

template <typename T>
void Model<T>::forward_batch(const Tensor<T>& images, bool training, Tensor<T>& K, Tensor<T>& O, Cache* cache)
{
    run(images, training, K, O, cache, nullptr);
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& img, bool keep_internals) const
{
    if (img.rank() != 2) throw Error(ErrorCode::shape_mismatch, "forward expects an [H,W] image");
    const int H = img.dim(0), W = img.dim(1);
    ModelOutput<T> out;
    Tensor<T> K, O;
    // Inference-mode batch norm reads running statistics only.
    const_cast<Model*>(this)->run(img.reshaped({1, 1, H, W}), false, K, O, nullptr, keep_internals ? &out : nullptr);
    out.K = K.reshaped({H, W});
    out.O = O.reshaped({cfg_.group_order, H, W});
    return out;
}

template <typename T>
void Model<T>::backward(Cache& cache, const Tensor<T>& dK, const Tensor<T>& dO)
{
    const int B = dK.dim(0), H = dK.dim(1), W = dK.dim(2);
    const int G = cfg_.group_order, C = cfg_.channels, S = cfg_.scales;
    const std::size_t plane = std::size_t(H) * W;
    const int pad = (cfg_.kernel - 1) / 2;

    const Tensor<T> dOsum = softmax_backward(cache.O, dO, 1);

    for (int b = 0; b < B; ++b) {
        const T* g = dK.data() + std::size_t(b) * plane;
        T sb = 0;
        for (std::size_t i = 0; i < plane; ++i) sb += g[i];
        rho_bias_grad[0] += sb;
        for (int j = 0; j < S * C; ++j) {
            const T* src = cache.concat.data() + (std::size_t(b) * S * C + j) * plane;
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += src[i] * g[i];
            rho_grad[j] += acc;
        }
    }

    for (int s = 0; s < S; ++s) {
        auto& sc = cache.scales[s];
        const int h = sc.h, w = sc.w;
        Tensor<T> dPu({B, C, H, W});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const T r = rho[s * C + c];
                const T* g = dK.data() + std::size_t(b) * plane;
                T* d = dPu.data() + (std::size_t(b) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) d[i] = r * g[i];
            }
        const Tensor<T> dP = bilinear_resize_backward(dPu, h, w);
        const Tensor<T> dQ = bilinear_resize_backward(dOsum, h, w);
        const Tensor<T>& top = sc.act.back();
        Tensor<T> dH = group_pool_max_backward(dP, sc.pool_arg, top.shape());
        dH += channel_pool_backward(top, eta, dQ, eta_grad);

        for (int l = cfg_.layers - 1; l >= 0; --l) {
            const Tensor<T> dy = relu_backward(sc.act[l], dH);
            Tensor<T> dz = bn[l].backward(sc.bn[l], dy);
            sc.bn[l] = {};
            dz.reshape_inplace({B, G * C, h, w});
            if (l == 0) {
                const Tensor<T> bank = expand_lift_kernel(conv[0], rot_);
                const auto grads = conv2d_backward(sc.input, bank, dz, pad, 1, false);
                conv_grad[0] += fold_lift_kernel_grad(grads.kernel, conv[0].shape(), rot_);
            } else {
                const Tensor<T> bank = expand_group_kernel(conv[l], rot_);
                const auto grads = conv2d_backward(sc.act[l - 1].reshaped({B, G * C, h, w}), bank, dz, pad, 1, true);
                conv_grad[l] += fold_group_kernel_grad(grads.kernel, conv[l].shape(), rot_);
                dH = grads.input.reshaped({B, G, C, h, w});
            }
            sc.act[l] = {};
        }
    }
}

template <typename T>
void Model<T>::zero_grad()
{
    for (auto& g : conv_grad) g.fill(0);
    for (auto& b : bn) {
        b.grad_gamma.fill(0);
        b.grad_beta.fill(0);
    }
    eta_grad.fill(0);
    rho_grad.fill(0);
    rho_bias_grad.fill(0);
}

template <typename T>
std::vector<NamedParam<T>> Model<T>::parameters()
{
    std::vector<NamedParam<T>> ps;
    for (int l = 0; l < cfg_.layers; ++l) ps.push_back({"conv" + std::to_string(l) + ".weight", &conv[l], &conv_grad[l]});
    for (int l = 0; l < cfg_.layers; ++l) {
        ps.push_back({"bn" + std::to_string(l) + ".gamma", &bn[l].gamma, &bn[l].grad_gamma});
        ps.push_back({"bn" + std::to_string(l) + ".beta", &bn[l].beta, &bn[l].grad_beta});
    }
    ps.push_back({"eta.weight", &eta, &eta_grad});
    ps.push_back({"rho.weight", &rho, &rho_grad});
    ps.push_back({"rho.bias", &rho_bias, &rho_bias_grad});
    return ps;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::state()
{
    std::vector<std::pair<std::string, Tensor<T>*>> st;
    for (auto& p : parameters()) st.emplace_back(p.name, p.value);
    for (int l = 0; l < cfg_.layers; ++l) {
        st.emplace_back("bn" + std::to_string(l) + ".running_mean", &bn[l].running_mean);
        st.emplace_back("bn" + std::to_string(l) + ".running_var", &bn[l].running_var);
    }
    return st;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Model<T>::state() const
{
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (auto& [name, ptr] : const_cast<Model*>(this)->state()) out.emplace_back(name, ptr);
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const
{
    std::size_t n = 0;
    for (auto& p : const_cast<Model*>(this)->parameters()) n += p.value->size();
    return n;
}

namespace {

template <typename T>
Tensor<T> slice0(const Tensor<T>& t, int i, Shape shape)
{
    const std::size_t n = shape_size(shape);
    std::vector<T> v(t.data() + std::size_t(i) * n, t.data() + std::size_t(i + 1) * n);
    return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
void add_into0(Tensor<T>& t, int i, const Tensor<T>& src, T scale)
{
    T* d = t.data() + std::size_t(i) * src.size();
    for (std::size_t k = 0; k < src.size(); ++k) d[k] += scale * src[k];
}

} // namespace

template <typename T>
StepLosses Model<T>::loss_and_grad(const std::vector<RigidPair>& pairs, WeightTape* tape)
{
    if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "empty training batch");
    const int B = int(pairs.size());
    const int H = pairs[0].img_a.dim(0), W = pairs[0].img_a.dim(1);
    const int G = cfg_.group_order;
    const std::size_t plane = std::size_t(H) * W;
    Tensor<T> images({2 * B, 1, H, W});
    for (int i = 0; i < B; ++i) {
        if (pairs[i].img_a.shape() != Shape{H, W} || pairs[i].img_b.shape() != Shape{H, W})
            throw Error(ErrorCode::shape_mismatch, "training batch images must share one size");
        for (std::size_t p = 0; p < plane; ++p) {
            images[std::size_t(i) * plane + p] = T(pairs[i].img_a[p]);
            images[std::size_t(B + i) * plane + p] = T(pairs[i].img_b[p]);
        }
    }
    Cache cache;
    Tensor<T> K, O;
    run(images, true, K, O, &cache, nullptr);

    Tensor<T> dK(K.shape()), dO(O.shape());
    const KeypointLossConfig kcfg = cfg_.keypoint_loss();
    const T inv_b = T(1.0 / B);
    const T beta = T(cfg_.beta);
    StepLosses losses;
    for (int i = 0; i < B; ++i) {
        const RotTransform& t = pairs[i].t;
        const Tensor<T> ka = slice0(K, i, {H, W}), kb = slice0(K, B + i, {H, W});
        const Tensor<T> oa = slice0(O, i, {G, H, W}), ob = slice0(O, B + i, {G, H, W});
        Tensor<T> goa, gob, gka, gkb;
        const T l_ori = orientation_alignment_loss(oa, ob, t, source_validity_mask(t), &goa, &gob);
        if (!std::isfinite(double(l_ori))) throw Error(ErrorCode::numeric, "orientation loss is not finite");
        const T l_kp = keypoint_loss(ka, kb, t, kcfg, &gka, &gkb, tape);
        if (!std::isfinite(double(l_kp))) throw Error(ErrorCode::numeric, "keypoint loss is not finite");
        add_into0(dO, i, goa, beta * inv_b);
        add_into0(dO, B + i, gob, beta * inv_b);
        add_into0(dK, i, gka, inv_b);
        add_into0(dK, B + i, gkb, inv_b);
        losses.ori += double(l_ori) / B;
        losses.kpts += double(l_kp) / B;
    }
    losses.total = total_loss(losses.ori, losses.kpts, cfg_.beta);
    backward(cache, dK, dO);
    return losses;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const
{
    Model<U> out(cfg_);
    auto src = state();
    auto dst = out.state();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    return out;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;

Model<float> make_model(const RekdConfig& cfg) { return Model<float>(cfg); }

StepLosses train_step(Model<float>& model, const std::vector<RigidPair>& pairs, AdamState& optimizer)
{
    model.zero_grad();
    const StepLosses losses = model.loss_and_grad(pairs);
    if (!std::isfinite(losses.total)) throw Error(ErrorCode::numeric, "total loss is not finite");
    std::vector<Tensor<float>*> params;
    std::vector<const Tensor<float>*> grads;
    std::vector<std::string> names;
    for (auto& p : model.parameters()) {
        params.push_back(p.value);
        grads.push_back(p.grad);
        names.push_back(p.name);
    }
    adam_step(params, grads, names, optimizer);
    return losses;
}

// ---------------------------------------------------------------- checkpoint

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[5] = {'R', 'E', 'K', 'D', '1'};
constexpr std::uint8_t kTagF32 = 0;
constexpr std::uint8_t kTagText = 1;
const std::string kConfigRecord = "__config";

template <typename V>
void put(std::ostream& os, V v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& what)
{
    V v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(V)))
        throw Error(ErrorCode::truncated, "checkpoint ends inside " + what);
    return v;
}

struct Record {
    std::uint8_t tag = 0;
    Shape shape;
    std::vector<char> bytes;
};

std::map<std::string, Record> read_records(const std::string& path, std::string& config_text)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, "cannot open checkpoint " + path);
    char magic[5];
    if (!in.read(magic, 5)) throw Error(ErrorCode::truncated, "checkpoint shorter than its magic");
    if (std::memcmp(magic, kMagic, 5) != 0) throw Error(ErrorCode::bad_magic, path + " is not a REKD1 checkpoint");
    std::map<std::string, Record> records;
    bool have_config = false;
    while (in.peek() != std::char_traits<char>::eof()) {
        const auto name_len = get<std::uint32_t>(in, "record name length");
        if (name_len > (1u << 16)) throw Error(ErrorCode::truncated, "implausible record name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw Error(ErrorCode::truncated, "checkpoint ends inside a record name");
        Record r;
        r.tag = get<std::uint8_t>(in, name);
        const auto rank = get<std::uint32_t>(in, name);
        if (rank > 8) throw Error(ErrorCode::truncated, "implausible rank for " + name);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            r.shape.push_back(int(get<std::uint32_t>(in, name)));
            count *= r.shape.back();
        }
        const std::size_t elem = r.tag == kTagF32 ? 4 : 1;
        if (r.tag != kTagF32 && r.tag != kTagText) throw Error(ErrorCode::bad_magic, "unknown dtype tag in " + name);
        r.bytes.resize(count * elem);
        if (!in.read(r.bytes.data(), std::streamsize(r.bytes.size())))
            throw Error(ErrorCode::truncated, "payload of " + name + " is truncated");
        if (name == kConfigRecord) {
            config_text.assign(r.bytes.begin(), r.bytes.end());
            have_config = true;
        } else {
            records[name] = std::move(r);
        }
    }
    if (!have_config) throw Error(ErrorCode::truncated, "checkpoint has no config record");
    return records;
}

void fill_model(Model<float>& model, const std::map<std::string, Record>& records)
{
    for (auto& [name, tensor] : model.state()) {
        const auto it = records.find(name);
        if (it == records.end()) throw Error(ErrorCode::shape_mismatch, "checkpoint lacks " + name);
        if (it->second.tag != kTagF32 || it->second.shape != tensor->shape())
            throw Error(ErrorCode::shape_mismatch, name + ": checkpoint " + shape_string(it->second.shape) + " vs model " +
                                                       shape_string(tensor->shape()));
        std::memcpy(tensor->data(), it->second.bytes.data(), it->second.bytes.size());
    }
}

} // namespace

void save_checkpoint(const Model<float>& model, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write checkpoint " + path);
    out.write(kMagic, 5);
    auto record = [&](const std::string& name, std::uint8_t tag, const Shape& shape, const char* bytes, std::size_t n) {
        put<std::uint32_t>(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        put<std::uint8_t>(out, tag);
        put<std::uint32_t>(out, std::uint32_t(shape.size()));
        for (int d : shape) put<std::uint32_t>(out, std::uint32_t(d));
        out.write(bytes, std::streamsize(n));
    };
    for (const auto& [name, tensor] : model.state())
        record(name, kTagF32, tensor->shape(), reinterpret_cast<const char*>(tensor->data()), tensor->size() * 4);
    const std::string cfg = model.config().to_text();
    record(kConfigRecord, kTagText, {int(cfg.size())}, cfg.data(), cfg.size());
    if (!out) throw Error(ErrorCode::io, "failed writing checkpoint " + path);
}

Model<float> load_checkpoint(const std::string& path)
{
    std::string cfg_text;
    const auto records = read_records(path, cfg_text);
    Model<float> model(RekdConfig::from_text(cfg_text));
    fill_model(model, records);
    return model;
}

Model<float> load_checkpoint(const std::string& path, const RekdConfig& cfg)
{
    std::string cfg_text;
    const auto records = read_records(path, cfg_text);
    Model<float> model(cfg);
    fill_model(model, records);
    return model;
}

} // namespace rekd
