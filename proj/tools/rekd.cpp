#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rekd/datagen.hpp"
#include "rekd/evalkit.hpp"
#include "rekd/image_io.hpp"
#include "rekd/inference.hpp"
#include "rekd/log.hpp"
#include "rekd/matching.hpp"
#include "rekd/model.hpp"
#include "rekd/parallel.hpp"
#include "rekd/selfcheck.hpp"
#include "rekd/train.hpp"

namespace fs = std::filesystem;
using namespace rekd;

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, missing = 3, mismatch = 4, numeric = 5 };

// Raised for checkpoint/config disagreements so they map to their own exit code.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path)
{
    if (!fs::exists(path)) throw Error(ErrorCode::missing_file, "no such file or directory: " + path);
}

Model<float> open_checkpoint(const std::string& path)
{
    require_file(path);
    try {
        return load_checkpoint(path);
    } catch (const Error& e) {
        throw CheckpointError(e.what());
    }
}

/// key=value lines of everything the command resolved, written beside its output.
class ConfigEcho {
public:
    template <typename V>
    void set(const std::string& key, const V& v)
    {
        std::ostringstream os;
        os.precision(17);
        os << v;
        entries_[key] = os.str();
    }
    void write(const std::string& output_path, const std::string& extra = {}) const
    {
        std::ofstream out(output_path + ".config.txt", std::ios::trunc);
        for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
        out << extra;
    }

private:
    std::map<std::string, std::string> entries_;
};

struct Globals {
    int threads = 0;
    bool deterministic = false;
    std::string log_level = "info";
};

void apply_globals(const Globals& g, ConfigEcho& echo)
{
    if (g.threads > 0) parallel::set_thread_count(g.threads);
    parallel::set_deterministic(g.deterministic);
    log().set_level(spdlog::level::from_str(g.log_level));
    echo.set("threads", parallel::thread_count());
    echo.set("deterministic", g.deterministic ? 1 : 0);
}

std::vector<Tensor<float>> read_image_dir(const std::string& dir)
{
    require_file(dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw Error(ErrorCode::missing_file, "no .pgm images in " + dir);
    std::vector<Tensor<float>> images;
    for (const auto& p : paths) images.push_back(read_pgm(p));
    return images;
}

struct EvalPair {
    std::string id;
    Tensor<float> a, b;
    PlanarWarp warp;
    std::optional<RotTransform> rotation;
};

/// Pair folders (manifest.txt) or HPatches-style scenes.
std::vector<EvalPair> read_eval_pairs(const std::string& dir, bool validation_only)
{
    require_file(dir);
    std::vector<EvalPair> pairs;
    if (fs::exists(fs::path(dir) / "manifest.txt")) {
        for (const auto& e : read_manifest(dir)) {
            if (validation_only && !e.validation) continue;
            RigidPair p = load_pair(dir, e.id);
            pairs.push_back({e.id, p.img_a, p.img_b, p.t.planar(), p.t});
        }
        return pairs;
    }
    for (const auto& scene : load_planar_scenes(dir))
        for (std::size_t k = 0; k < scene.warps.size(); ++k)
            pairs.push_back({scene.name + "/1-" + std::to_string(k + 2), scene.images[0], scene.images[k + 1],
                             scene.warps[k], std::nullopt});
    if (pairs.empty()) throw Error(ErrorCode::missing_file, dir + " holds neither a manifest nor scene folders");
    return pairs;
}

std::vector<double> orientations(const std::vector<Keypoint>& kps)
{
    std::vector<double> o;
    for (const auto& k : kps) o.push_back(k.orientation_deg);
    return o;
}

std::vector<Match> match_images(const Model<float>& model, const Tensor<float>& a, const Tensor<float>& b, int p,
                                bool filter, double t, std::vector<Keypoint>* ka_out = nullptr,
                                std::vector<Keypoint>* kb_out = nullptr)
{
    DetectOptions det;
    det.num_keypoints = p;
    const auto ka = detect(model, a, det), kb = detect(model, b, det);
    auto matches = mnn_match(describe(a, ka), describe(b, kb));
    if (filter) {
        const auto flags = orientation_outlier_filter(matches, orientations(ka), orientations(kb), model.group_order(), t);
        for (std::size_t i = 0; i < matches.size(); ++i) matches[i].inlier = flags[i];
    }
    if (ka_out) *ka_out = ka;
    if (kb_out) *kb_out = kb;
    return matches;
}

int report_checks(const std::vector<CheckLine>& lines, const std::string& out)
{
    bool all = true;
    std::ostringstream csv;
    csv << "check,error,tolerance,pass\n";
    for (const auto& l : lines) {
        log().info("{:<40} error {:.3e} (tol {:.0e}) {}", l.name, l.value, l.tolerance, l.pass() ? "PASS" : "FAIL");
        csv << l.name << "," << l.value << "," << l.tolerance << "," << (l.pass() ? 1 : 0) << "\n";
        all = all && l.pass();
    }
    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        f << csv.str();
    }
    return all ? Exit::ok : Exit::failure;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rotation-equivariant oriented keypoint detector"};
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--threads", globals.threads, "Worker threads (default: REKD_THREADS or all cores)");
    app.add_flag("--deterministic", globals.deterministic, "Single-threaded numerics");
    app.add_option("--log-level", globals.log_level, "trace|debug|info|warn|error")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
    ConfigEcho echo;
    std::function<int()> command;

    // synth
    auto* synth = app.add_subcommand("synth", "Write synthetic rotation pairs");
    std::string synth_out;
    int synth_pairs = 100, synth_size = 192;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--pairs", synth_pairs)->check(CLI::NonNegativeNumber);
    synth->add_option("--size", synth_size)->check(CLI::Range(16, 4096));
    synth->add_option("--seed", synth_seed);
    synth->callback([&] {
        command = [&] {
            echo.set("pairs", synth_pairs);
            echo.set("size", synth_size);
            echo.set("seed", synth_seed);
            make_dataset(synth_pairs, synth_size, synth_seed, synth_out);
            echo.write((fs::path(synth_out) / "manifest.txt").string());
            log().info("wrote {} pairs to {}", synth_pairs, synth_out);
            return Exit::ok;
        };
    });

    // train
    auto* trn = app.add_subcommand("train", "Train a detector on a pair folder");
    std::string train_data, train_out, train_config;
    RekdConfig cfg;
    trn->add_option("--data", train_data, "Pair folder written by synth")->required();
    trn->add_option("--out", train_out, "Checkpoint path")->required();
    trn->add_option("--config", train_config, "key=value config file; flags override it");
    auto* o_group = trn->add_option("--group", cfg.group_order, "Cyclic group order")->check(CLI::PositiveNumber);
    auto* o_channels = trn->add_option("--channels", cfg.channels)->check(CLI::PositiveNumber);
    auto* o_epochs = trn->add_option("--epochs", cfg.epochs)->check(CLI::PositiveNumber);
    auto* o_lr = trn->add_option("--lr", cfg.lr)->check(CLI::PositiveNumber);
    auto* o_batch = trn->add_option("--batch", cfg.batch)->check(CLI::PositiveNumber);
    auto* o_beta = trn->add_option("--beta", cfg.beta)->check(CLI::NonNegativeNumber);
    auto* o_seed = trn->add_option("--seed", cfg.seed);
    trn->add_flag("--deterministic", globals.deterministic, "Single-threaded numerics");
    trn->callback([&] {
        command = [&] {
            require_file(train_data);
            if (!train_config.empty()) {
                require_file(train_config);
                std::ifstream in(train_config);
                std::stringstream ss;
                ss << in.rdbuf();
                RekdConfig file_cfg = RekdConfig::from_text(ss.str());
                // Explicit flags win over the file.
                if (o_group->count()) file_cfg.group_order = cfg.group_order;
                if (o_channels->count()) file_cfg.channels = cfg.channels;
                if (o_epochs->count()) file_cfg.epochs = cfg.epochs;
                if (o_lr->count()) file_cfg.lr = cfg.lr;
                if (o_batch->count()) file_cfg.batch = cfg.batch;
                if (o_beta->count()) file_cfg.beta = cfg.beta;
                if (o_seed->count()) file_cfg.seed = cfg.seed;
                cfg = file_cfg;
            }
            cfg.validate();
            const auto train_pairs = load_split(train_data, false);
            const auto val_pairs = load_split(train_data, true);
            log().info("training on {} pairs, validating on {}", train_pairs.size(), val_pairs.size());
            std::ofstream curve(train_out + ".loss.csv", std::ios::trunc);
            curve << "epoch,lr,loss,loss_ori,loss_kpts,val_repeatability,seconds\n";
            TrainOptions opts;
            opts.on_epoch = [&](const EpochReport& r) {
                curve << r.epoch << "," << r.lr << "," << r.loss.total << "," << r.loss.ori << "," << r.loss.kpts << ","
                      << (r.val_repeatability ? std::to_string(*r.val_repeatability) : "") << "," << r.seconds << "\n";
                curve.flush();
            };
            const TrainResult result = train(cfg, train_pairs, val_pairs, opts);
            save_checkpoint(result.best, train_out);
            echo.set("best_epoch", result.best_epoch);
            echo.write(train_out, cfg.to_text());
            log().info("saved epoch {} model to {}", result.best_epoch, train_out);
            return Exit::ok;
        };
    });

    // detect
    auto* det = app.add_subcommand("detect", "Detect oriented keypoints in one image");
    std::string det_ckpt, det_image, det_out;
    int det_p = 300;
    det->add_option("--ckpt", det_ckpt)->required();
    det->add_option("--image", det_image, "8-bit PGM")->required();
    det->add_option("--num-kpts", det_p)->check(CLI::NonNegativeNumber);
    det->add_option("--out", det_out)->required();
    det->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(det_ckpt);
            require_file(det_image);
            const Tensor<float> img = read_pgm(det_image);
            DetectOptions opts;
            opts.num_keypoints = det_p;
            const auto kps = detect(model, img, opts);
            write_keypoints(det_out, kps, img.dim(1), img.dim(0));
            echo.set("ckpt", det_ckpt);
            echo.set("image", det_image);
            echo.set("num_kpts", det_p);
            echo.set("nms_window", opts.nms_window);
            echo.write(det_out);
            log().info("{} keypoints -> {}", kps.size(), det_out);
            return Exit::ok;
        };
    });

    // match
    auto* mt = app.add_subcommand("match", "Detect, describe and match two images");
    std::string mt_ckpt, mt_a, mt_b, mt_out;
    int mt_p = 300;
    bool mt_filter = false;
    double mt_t = 30;
    mt->add_option("--ckpt", mt_ckpt)->required();
    mt->add_option("--image-a", mt_a)->required();
    mt->add_option("--image-b", mt_b)->required();
    mt->add_option("--num-kpts", mt_p)->check(CLI::NonNegativeNumber);
    mt->add_option("--out", mt_out)->required();
    mt->add_flag("--filter-orientation", mt_filter, "Flag matches that disagree with the modal orientation difference");
    mt->add_option("--t", mt_t, "Outlier threshold in degrees")->check(CLI::Range(0.0, 180.0));
    mt->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(mt_ckpt);
            require_file(mt_a);
            require_file(mt_b);
            const Tensor<float> img_a = read_pgm(mt_a), img_b = read_pgm(mt_b);
            std::vector<Keypoint> ka, kb;
            const auto matches = match_images(model, img_a, img_b, mt_p, mt_filter, mt_t, &ka, &kb);
            write_matches(mt_out, matches);
            write_keypoints(mt_out + ".a.kpts", ka, img_a.dim(1), img_a.dim(0));
            write_keypoints(mt_out + ".b.kpts", kb, img_b.dim(1), img_b.dim(0));
            echo.set("ckpt", mt_ckpt);
            echo.set("image_a", mt_a);
            echo.set("image_b", mt_b);
            echo.set("num_kpts", mt_p);
            echo.set("filter_orientation", mt_filter ? 1 : 0);
            echo.set("t", mt_t);
            echo.write(mt_out);
            log().info("{} matches -> {}", matches.size(), mt_out);
            return Exit::ok;
        };
    });

    // eval-rep / eval-mma / eval-ori
    struct EvalArgs {
        std::string ckpt, data, out;
        int p = 300;
        double threshold = 3;
        bool val_only = false;
        bool filter = false;
        double t = 30;
    };
    EvalArgs ev;
    auto add_eval = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--ckpt", ev.ckpt)->required();
        sub->add_option("--data", ev.data, "Pair folder or HPatches-style folder")->required();
        sub->add_option("--out", ev.out, "CSV path")->required();
        sub->add_flag("--val-only", ev.val_only, "Only the validation split of a pair folder");
        return sub;
    };
    auto* erep = add_eval("eval-rep", "Repeatability per pair");
    erep->add_option("--num-kpts", ev.p)->check(CLI::NonNegativeNumber);
    erep->add_option("--threshold", ev.threshold, "Pixels")->check(CLI::PositiveNumber);
    erep->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(ev.ckpt);
            const auto pairs = read_eval_pairs(ev.data, ev.val_only);
            std::ofstream out(ev.out, std::ios::trunc);
            out << "pair,repeatability\n";
            DetectOptions det;
            det.num_keypoints = ev.p;
            RepeatabilityOptions rep;
            rep.threshold_px = ev.threshold;
            double mean = 0;
            for (const auto& p : pairs) {
                const double r = repeatability(detect(model, p.a, det), detect(model, p.b, det), p.warp, rep);
                out << p.id << "," << r << "\n";
                mean += r;
            }
            out << "mean," << mean / double(pairs.size()) << "\n";
            echo.set("ckpt", ev.ckpt);
            echo.set("data", ev.data);
            echo.set("num_kpts", ev.p);
            echo.set("threshold_px", ev.threshold);
            echo.write(ev.out);
            log().info("mean repeatability {:.4f} over {} pairs", mean / double(pairs.size()), pairs.size());
            return Exit::ok;
        };
    });
    auto* emma = add_eval("eval-mma", "Mean matching accuracy at 3 and 5 px");
    emma->add_option("--num-kpts", ev.p)->check(CLI::NonNegativeNumber);
    emma->add_flag("--filter-orientation", ev.filter);
    emma->add_option("--t", ev.t)->check(CLI::Range(0.0, 180.0));
    emma->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(ev.ckpt);
            const auto pairs = read_eval_pairs(ev.data, ev.val_only);
            std::ofstream out(ev.out, std::ios::trunc);
            out << "pair,matches,mma3,mma5\n";
            double m3 = 0, m5 = 0;
            for (const auto& p : pairs) {
                std::vector<Keypoint> ka, kb;
                const auto matches = match_images(model, p.a, p.b, ev.p, ev.filter, ev.t, &ka, &kb);
                const auto acc = mma(matches, ka, kb, p.warp, {3.0, 5.0}, ev.filter);
                std::size_t kept = 0;
                for (const auto& m : matches) kept += !ev.filter || m.inlier;
                out << p.id << "," << kept << "," << acc[0] << "," << acc[1] << "\n";
                m3 += acc[0];
                m5 += acc[1];
            }
            out << "mean,," << m3 / double(pairs.size()) << "," << m5 / double(pairs.size()) << "\n";
            echo.set("ckpt", ev.ckpt);
            echo.set("data", ev.data);
            echo.set("num_kpts", ev.p);
            echo.set("filter_orientation", ev.filter ? 1 : 0);
            echo.set("t", ev.t);
            echo.write(ev.out);
            log().info("MMA@3 {:.4f} MMA@5 {:.4f}", m3 / double(pairs.size()), m5 / double(pairs.size()));
            return Exit::ok;
        };
    });
    double ori_thresh = 15;
    auto* eori = add_eval("eval-ori", "Dense orientation accuracy on rotation pairs");
    eori->add_option("--threshold", ori_thresh, "Degrees")->check(CLI::PositiveNumber);
    eori->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(ev.ckpt);
            const auto pairs = read_eval_pairs(ev.data, ev.val_only);
            std::ofstream out(ev.out, std::ios::trunc);
            out << "pair,angle,ori_accuracy\n";
            double mean = 0;
            int n = 0;
            for (const auto& p : pairs) {
                if (!p.rotation) continue;
                const double acc = orientation_accuracy(model.forward(p.a).O, model.forward(p.b).O, *p.rotation,
                                                        source_validity_mask(*p.rotation), ori_thresh);
                out << p.id << "," << p.rotation->angle_deg << "," << acc << "\n";
                mean += acc;
                ++n;
            }
            if (n == 0) throw Error(ErrorCode::invalid_argument, "eval-ori needs rotation pairs (a synth folder)");
            out << "mean,," << mean / n << "\n";
            echo.set("ckpt", ev.ckpt);
            echo.set("data", ev.data);
            echo.set("threshold_deg", ori_thresh);
            echo.write(ev.out);
            log().info("mean orientation accuracy {:.4f} over {} pairs", mean / n, n);
            return Exit::ok;
        };
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "Repeatability and orientation accuracy against rotation angle");
    std::string sw_ckpt, sw_images, sw_out;
    SweepOptions sw_opts;
    double sw_step = 1;
    sw->add_option("--ckpt", sw_ckpt)->required();
    sw->add_option("--images", sw_images, "Directory of 8-bit PGM images")->required();
    sw->add_option("--noise-sigma", sw_opts.noise_sigma)->check(CLI::NonNegativeNumber);
    sw->add_option("--num-kpts", sw_opts.num_keypoints)->check(CLI::NonNegativeNumber);
    sw->add_option("--step", sw_step, "Angle step in degrees")->check(CLI::Range(0.01, 360.0));
    sw->add_option("--seed", sw_opts.seed);
    sw->add_option("--out", sw_out)->required();
    sw->callback([&] {
        command = [&] {
            const Model<float> model = open_checkpoint(sw_ckpt);
            const auto images = read_image_dir(sw_images);
            for (double a = 0; a < 360 - 1e-9; a += sw_step) sw_opts.angles.push_back(a);
            const auto rows = rotation_sweep(model, images, sw_opts);
            write_sweep_csv(sw_out, rows);
            echo.set("ckpt", sw_ckpt);
            echo.set("images", sw_images);
            echo.set("noise_sigma", sw_opts.noise_sigma);
            echo.set("num_kpts", sw_opts.num_keypoints);
            echo.set("step", sw_step);
            echo.set("seed", sw_opts.seed);
            echo.write(sw_out);
            log().info("{} angles -> {}", rows.size(), sw_out);
            return Exit::ok;
        };
    });

    // self checks
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
    GradientCheckOptions gc_opts;
    std::string gc_out;
    gc->add_option("--probes", gc_opts.probes)->check(CLI::PositiveNumber);
    gc->add_option("--seed", gc_opts.seed);
    gc->add_option("--out", gc_out, "Optional CSV report");
    gc->callback([&] { command = [&] { return report_checks(gradient_check(gc_opts), gc_out); }; });

    auto* eq = app.add_subcommand("equiv-check", "Quarter-turn equivariance of random networks");
    EquivarianceCheckOptions eq_opts;
    std::string eq_out;
    eq->add_option("--inits", eq_opts.inits)->check(CLI::PositiveNumber);
    eq->add_option("--size", eq_opts.size)->check(CLI::Range(24, 512));
    eq->add_option("--seed", eq_opts.seed);
    eq->add_option("--out", eq_out, "Optional CSV report");
    eq->callback([&] { command = [&] { return report_checks(equivariance_check(eq_opts), eq_out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::usage;
    }
    try {
        apply_globals(globals, echo);
        return command();
    } catch (const CheckpointError& e) {
        log().error("{}", e.what());
        return Exit::mismatch;
    } catch (const Error& e) {
        log().error("{}", e.what());
        switch (e.code()) {
        case ErrorCode::missing_file: return Exit::missing;
        case ErrorCode::numeric: return Exit::numeric;
        case ErrorCode::invalid_argument: return Exit::usage;
        default: return Exit::failure;
        }
    } catch (const std::exception& e) {
        log().error("{}", e.what());
        return Exit::failure;
    }
}
