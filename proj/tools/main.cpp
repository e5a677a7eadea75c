#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edsc/autodiff.hpp"
#include "edsc/common.hpp"
#include "edsc/datagen.hpp"
#include "edsc/deformable.hpp"
#include "edsc/gradcheck.hpp"
#include "edsc/io.hpp"
#include "edsc/metrics.hpp"
#include "edsc/model.hpp"
#include "edsc/ops.hpp"
#include "edsc/rng.hpp"
#include "edsc/sampling.hpp"
#include "edsc/threading.hpp"
#include "edsc/training.hpp"
#include "seq_dir.hpp"

namespace fs = std::filesystem;
using namespace edsc;

namespace {

// ---------------------------------------------------------------- helpers

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt_g(v[i]);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos])))
                ++pos;
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("cannot parse " + what + " value '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(what + " list is empty");
    return out;
}

std::pair<int64_t, int64_t> parse_resolution(const std::string& s) {
    const size_t x = s.find('x');
    try {
        if (x == std::string::npos) {
            const int64_t n = std::stoll(s);
            return {n, n};
        }
        return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw UsageError("cannot parse resolution '" + s + "', expected HxW");
    }
}

void set_kv(KvPairs& kv, const std::string& key, const std::string& value) {
    for (auto& p : kv)
        if (p.first == key) {
            p.second = value;
            return;
        }
    kv.emplace_back(key, value);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.kernel_size", "model.hetconv_p",  "model.widths",         "model.est_widths",
        "model.multi_time",  "model.use_mask",   "model.use_bias",       "train.lr",
        "train.epochs",      "train.halve_every", "train.batch",         "train.loss",
        "train.feature_weight", "train.augment", "train.val_count",      "train.save_every",
        "seed",              "data.size",        "data.count",           "data.frames",
        "data.velocity",     "data.occluders",   "out.dir"};
    return keys;
}

// Layers the key=value config file under the defaults; flags overlay later.
void overlay_config_file(KvPairs& kv, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& p : parse_kv_text(ss.str())) {
        if (!known_keys().count(p.first))
            throw UsageError("unknown config key '" + p.first + "' in " + path);
        set_kv(kv, p.first, p.second);
    }
}

void write_run_config(const std::string& path, const KvPairs& kv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write run config: " + path);
    out << "# resolved run configuration\n";
    for (const auto& p : kv) out << p.first << "=" << p.second << "\n";
}

const std::string& kv_get(const KvPairs& kv, const std::string& key) {
    const std::string* v = kv_find(kv, key);
    if (!v) throw UsageError("missing config key " + key);
    return *v;
}

double kv_double(const KvPairs& kv, const std::string& key) {
    const std::string& v = kv_get(kv, key);
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " is not a number: '" + v + "'");
    }
}

int kv_int(const KvPairs& kv, const std::string& key) {
    const std::string& v = kv_get(kv, key);
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " is not an integer: '" + v + "'");
    }
}

bool kv_bool(const KvPairs& kv, const std::string& key) {
    const std::string& v = kv_get(kv, key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw UsageError("config key " + key + " is not a boolean: '" + v + "'");
}

// ------------------------------------------------- shared flag groups

struct ModelFlags {
    int kernel = 0;
    int hetconv_p = 0;
    std::string widths, est_widths;
    bool multi_time = false, no_mask = false, no_bias = false;
    CLI::Option *o_kernel = nullptr, *o_p = nullptr, *o_widths = nullptr, *o_est = nullptr,
                *o_multi = nullptr, *o_no_mask = nullptr, *o_no_bias = nullptr;

    void attach(CLI::App* c) {
        o_kernel = c->add_option("--kernel", kernel, "separable kernel size n (odd)");
        o_p = c->add_option("--hetconv-p", hetconv_p, "mixed conv part count P");
        o_widths = c->add_option("--widths", widths, "encoder widths, e.g. 16,32,64,128");
        o_est = c->add_option("--est-widths", est_widths, "estimator trunk widths, e.g. 32,16,16");
        o_multi = c->add_flag("--multi-time", multi_time, "train the time-conditioned variant");
        o_no_mask = c->add_flag("--no-mask", no_mask, "drop the mask estimator");
        o_no_bias = c->add_flag("--no-bias", no_bias, "drop the bias estimator");
    }

    void overlay(KvPairs& kv) const {
        if (o_kernel->count()) set_kv(kv, "model.kernel_size", std::to_string(kernel));
        if (o_p->count()) set_kv(kv, "model.hetconv_p", std::to_string(hetconv_p));
        if (o_widths->count()) set_kv(kv, "model.widths", widths);
        if (o_est->count()) set_kv(kv, "model.est_widths", est_widths);
        if (o_multi->count()) set_kv(kv, "model.multi_time", multi_time ? "1" : "0");
        if (o_no_mask->count()) set_kv(kv, "model.use_mask", "0");
        if (o_no_bias->count()) set_kv(kv, "model.use_bias", "0");
    }
};

KvPairs model_defaults() { return model_config_to_kv(ModelConfig{}); }

// ------------------------------------------------------------ gen-data

int run_gen_data(const std::string& out_dir, const std::string& config_path, int size,
                 int count, int frames, uint64_t seed, const std::string& velocity,
                 bool occluders, bool force) {
    KvPairs kv;
    set_kv(kv, "data.size", std::to_string(size));
    set_kv(kv, "data.count", std::to_string(count));
    set_kv(kv, "data.frames", std::to_string(frames));
    set_kv(kv, "data.velocity", velocity.empty() ? "random" : velocity);
    set_kv(kv, "data.occluders", occluders ? "1" : "0");
    set_kv(kv, "seed", std::to_string(seed));
    set_kv(kv, "out.dir", out_dir);
    if (!config_path.empty()) overlay_config_file(kv, config_path);
    const int rsize = kv_int(kv, "data.size");
    const int rcount = kv_int(kv, "data.count");
    const int rframes = kv_int(kv, "data.frames");
    const uint64_t rseed = static_cast<uint64_t>(kv_double(kv, "seed"));
    if (rcount < 1) throw UsageError("data.count must be at least 1");

    if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        if (!force)
            throw UsageError("output directory " + out_dir +
                             " is not empty; pass --force to regenerate");
        for (const auto& e : fs::directory_iterator(out_dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("seq", 0) == 0 || name == "manifest.txt" || name == "config.txt")
                fs::remove_all(e.path());
        }
    }
    fs::create_directories(out_dir);

    std::optional<std::pair<double, double>> fixed;
    const std::string rvel = kv_get(kv, "data.velocity");
    if (rvel != "random") {
        const std::vector<double> v = parse_double_list(rvel, "data.velocity");
        if (v.size() != 2) throw UsageError("data.velocity needs two components vy,vx");
        fixed = {v[0], v[1]};
    }

    Rng rng(rseed);
    std::ofstream manifest(out_dir + "/manifest.txt", std::ios::binary);
    if (!manifest) throw DataError("cannot write manifest in " + out_dir);
    const std::vector<double> times = sequence_times(rframes);
    manifest << "# synthetic sequence manifest\n";
    manifest << "count=" << rcount << "\nframes=" << rframes << "\nsize=" << rsize
             << "\nseed=" << rseed << "\n";
    manifest << "times=" << join_doubles(times) << "\n";
    manifest << "target_times="
             << join_doubles(std::vector<double>(times.begin() + 1, times.end() - 1)) << "\n";

    for (int i = 0; i < rcount; ++i) {
        MotionSpec sp;
        sp.height = rsize;
        sp.width = rsize;
        sp.frame_count = rframes;
        if (fixed) {
            sp.bg_vy = fixed->first;
            sp.bg_vx = fixed->second;
        } else {
            sp.bg_vy = rng.uniform(-3.0, 3.0);
            sp.bg_vx = rng.uniform(-3.0, 3.0);
        }
        const bool occ = kv_bool(kv, "data.occluders") && (i % 2 == 1);
        if (occ) {
            sp.with_occluder = true;
            sp.occ_size = std::max<int64_t>(4, rsize / 4);
            sp.occ_cy = rng.uniform(rsize / 3.0, 2.0 * rsize / 3.0);
            sp.occ_cx = rng.uniform(rsize / 3.0, 2.0 * rsize / 3.0);
            sp.occ_vy = rng.uniform(-3.0, 3.0);
            sp.occ_vx = rng.uniform(-3.0, 3.0);
        }
        const uint64_t sub = rseed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(i + 1));
        const SyntheticSequence seq = gen_sequence(sp, sub);
        const std::string name = tools::seq_dir_name(i);
        tools::write_sequence_dir(out_dir + "/" + name, seq);
        manifest << name << ".velocity=" << fmt_g(sp.bg_vy) << "," << fmt_g(sp.bg_vx) << "\n";
        manifest << name << ".occluder=" << (occ ? 1 : 0) << "\n";
    }
    write_run_config(out_dir + "/config.txt", kv);
    std::cout << "wrote " << rcount << " sequences to " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

int run_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& config_path, const ModelFlags& mf, const KvPairs& flag_kv) {
    KvPairs kv = model_defaults();
    set_kv(kv, "train.lr", "0.0001");
    set_kv(kv, "train.epochs", "60");
    set_kv(kv, "train.halve_every", "20");
    set_kv(kv, "train.batch", "4");
    set_kv(kv, "train.loss", "charbonnier");
    set_kv(kv, "train.feature_weight", "0.01");
    set_kv(kv, "train.augment", "1");
    set_kv(kv, "train.val_count", "-1");
    set_kv(kv, "train.save_every", "1");
    set_kv(kv, "seed", "1");
    set_kv(kv, "data.size", "0");
    if (!config_path.empty()) overlay_config_file(kv, config_path);
    mf.overlay(kv);
    for (const auto& p : flag_kv) set_kv(kv, p.first, p.second);
    set_kv(kv, "out.dir", out_dir);

    const ModelConfig mc = model_config_from_kv(kv);
    validate(mc);

    TrainConfig tc;
    tc.lr = kv_double(kv, "train.lr");
    tc.epochs = kv_int(kv, "train.epochs");
    tc.halve_every = kv_int(kv, "train.halve_every");
    tc.batch = kv_int(kv, "train.batch");
    tc.augment = kv_bool(kv, "train.augment");
    tc.seed = static_cast<uint64_t>(kv_double(kv, "seed"));
    tc.loss.feature_weight = kv_double(kv, "train.feature_weight");
    const std::string loss = kv_get(kv, "train.loss");
    if (loss == "charbonnier")
        tc.loss.kind = LossKind::charbonnier;
    else if (loss == "charbonnier+feature" || loss == "charbonnier_feature")
        tc.loss.kind = LossKind::charbonnier_feature;
    else
        throw UsageError("train.loss must be charbonnier or charbonnier+feature, got '" + loss +
                         "'");

    std::vector<SyntheticSequence> seqs;
    for (const std::string& d : tools::list_sequence_dirs(data_dir))
        seqs.push_back(tools::load_sequence_dir(d));
    const int expect = kv_int(kv, "data.size");
    if (expect > 0)
        for (const auto& s : seqs)
            if (s.frames.front().shape().h != expect || s.frames.front().shape().w != expect)
                throw DataError("frames are " + s.frames.front().shape().str() +
                                ", expected data.size " + std::to_string(expect));

    int val_count = kv_int(kv, "train.val_count");
    if (val_count < 0) val_count = seqs.size() >= 5 ? static_cast<int>(seqs.size()) / 5 : 0;
    if (val_count >= static_cast<int>(seqs.size()))
        throw UsageError("train.val_count leaves no training sequences");
    std::vector<SyntheticSequence> val(seqs.end() - val_count, seqs.end());
    seqs.resize(seqs.size() - static_cast<size_t>(val_count));

    fs::create_directories(out_dir);
    write_run_config(out_dir + "/config.txt", kv);
    std::ofstream log(out_dir + "/log.txt", std::ios::binary);
    if (!log) throw DataError("cannot write log in " + out_dir);
    log << "# epoch, lr, train_loss, val_psnr\n";

    Model<float> model = build_model<float>(mc, tc.seed);
    const int save_every = std::max(1, kv_int(kv, "train.save_every"));
    const std::string ckpt_path = out_dir + "/model.ckpt";
    auto on_epoch = [&](const Model<float>& m, const EpochLog& e) {
        const std::string line = log_line(e);
        log << line << "\n";
        log.flush();
        std::cout << line << "\n";
        if (e.epoch % save_every == 0 || e.epoch == tc.epochs)
            save_checkpoint(ckpt_path, make_checkpoint(m));
    };

    const TrainResult res = train(model, seqs, val, tc, on_epoch);
    save_checkpoint(ckpt_path, make_checkpoint(model));
    std::cout << "checkpoint=" << ckpt_path << " final_val_psnr="
              << fmt_g(res.log.empty() ? 0.0 : res.log.back().val_psnr) << "\n";
    return 0;
}

// --------------------------------------------------------------- interp

Tensor<float> synthesize(Model<float>& model, const Tensor<float>& I1, const Tensor<float>& I2,
                         double t, bool naive) {
    if (!naive) {
        if (!model.config.multi_time && t != 0.5)
            throw UsageError(
                "this checkpoint is single-time; only --time 0.5 is valid "
                "(or pass --naive-rescale)");
        return interpolate(model, I1, I2,
                           model.config.multi_time ? std::optional<double>(t) : std::nullopt);
    }
    Tape<float> tape;
    SynthFields<float> f =
        model_forward(tape, model, tape.constant(I1), tape.constant(I2),
                      model.config.multi_time ? std::optional<double>(0.5) : std::nullopt);
    const auto scaled =
        naive_time_rescale(f.off1.value(), f.off2.value(), static_cast<float>(t));
    const Tensor<float>* m1 = f.m1.valid() ? &f.m1.value() : nullptr;
    const Tensor<float>* m2 = f.m2.valid() ? &f.m2.value() : nullptr;
    const Tensor<float>* db = f.db.valid() ? &f.db.value() : nullptr;
    return edsc_forward(I1, I2, f.kv1.value(), f.kh1.value(), f.kv2.value(), f.kh2.value(),
                        scaled.first, scaled.second, m1, m2, db, model.config.kernel_size);
}

int run_interp(const std::string& ckpt_path, const std::string& frame1,
               const std::string& frame2, double t, const std::string& times_str,
               const std::string& out, bool naive) {
    std::vector<double> times;
    if (!times_str.empty())
        times = parse_double_list(times_str, "--times");
    else
        times.push_back(t);
    for (double tv : times)
        if (!(tv > 0.0 && tv < 1.0))
            throw UsageError("interpolation time must lie in (0,1), got " + fmt_g(tv));

    const Checkpoint ck = load_checkpoint(ckpt_path);
    Model<float> model = model_from_checkpoint<float>(ck);
    const Tensor<float> I1 = read_ppm<float>(frame1);
    const Tensor<float> I2 = read_ppm<float>(frame2);

    const bool file_mode = times.size() == 1 && out.size() > 4 &&
                           out.compare(out.size() - 4, 4, ".ppm") == 0;
    KvPairs kv = ck.config;
    set_kv(kv, "interp.checkpoint", ckpt_path);
    set_kv(kv, "interp.frame1", frame1);
    set_kv(kv, "interp.frame2", frame2);
    set_kv(kv, "interp.times", join_doubles(times));
    set_kv(kv, "interp.naive_rescale", naive ? "1" : "0");

    if (file_mode) {
        const fs::path p(out);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_ppm(out, synthesize(model, I1, I2, times[0], naive));
        fs::path cfg(out);
        cfg.replace_extension(".config.txt");
        write_run_config(cfg.string(), kv);
        std::cout << "wrote " << out << "\n";
    } else {
        fs::create_directories(out);
        for (double tv : times) {
            char name[32];
            std::snprintf(name, sizeof(name), "t%.3f.ppm", tv);
            write_ppm(out + "/" + name, synthesize(model, I1, I2, tv, naive));
            std::cout << "wrote " << out << "/" << name << "\n";
        }
        write_run_config(out + "/config.txt", kv);
    }
    return 0;
}

// ----------------------------------------------------------------- eval

void print_metrics(const Tensor<float>& pred, const Tensor<float>& gt,
                   const Tensor<float>* I1, const Tensor<float>* I2,
                   const Tensor<float>* flow, int boundary_width) {
    char buf[256];
    std::string line;
    std::snprintf(buf, sizeof(buf), "psnr=%.4f ssim=%.6f ie=%.4f", psnr(pred, gt),
                  ssim(pred, gt), interpolation_error(pred, gt));
    line = buf;
    if (I1 && I2 && flow) {
        const OcclusionMask occ = occlusion_mask(*I1, *I2, *flow);
        std::snprintf(buf, sizeof(buf), " ie_o=%.4f", ie_occluded(pred, gt, occ));
        line += buf;
    }
    std::snprintf(buf, sizeof(buf), " ie_b=%.4f", ie_boundary(pred, gt, boundary_width));
    line += buf;
    std::cout << line << "\n";
}

int run_eval(const std::string& pred_path, const std::string& gt_path, const std::string& f1,
             const std::string& f2, const std::string& flow_path, int boundary_width) {
    const bool dir_mode = fs::is_directory(pred_path);
    if (!dir_mode) {
        const Tensor<float> pred = read_ppm<float>(pred_path);
        const Tensor<float> gt = read_ppm<float>(gt_path);
        Tensor<float> I1, I2, flow;
        const bool with_flow = !flow_path.empty();
        if (with_flow) {
            if (f1.empty() || f2.empty())
                throw UsageError("--flow needs --frame1 and --frame2 for the occlusion mask");
            I1 = read_ppm<float>(f1);
            I2 = read_ppm<float>(f2);
            flow = read_flo1(flow_path);
        }
        print_metrics(pred, gt, with_flow ? &I1 : nullptr, with_flow ? &I2 : nullptr,
                      with_flow ? &flow : nullptr, boundary_width);
        return 0;
    }
    if (!flow_path.empty())
        throw UsageError("flow-based metrics need single-file --pred/--gt");
    if (!fs::is_directory(gt_path)) throw UsageError("--pred is a directory but --gt is not");
    double sp = 0, ss = 0, si = 0, sb = 0;
    int n = 0;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(pred_path))
        if (e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const std::string& name : names) {
        const Tensor<float> pred = read_ppm<float>(pred_path + "/" + name);
        const Tensor<float> gt = read_ppm<float>(gt_path + "/" + name);
        sp += psnr(pred, gt);
        ss += ssim(pred, gt);
        si += interpolation_error(pred, gt);
        sb += ie_boundary(pred, gt, boundary_width);
        ++n;
    }
    if (n == 0) throw DataError("no .ppm files in " + pred_path);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "psnr=%.4f ssim=%.6f ie=%.4f ie_b=%.4f frames=%d", sp / n,
                  ss / n, si / n, sb / n, n);
    std::cout << buf << "\n";
    return 0;
}

// ---------------------------------------------------------------- count

int run_count(const std::string& config_path, const ModelFlags& mf, const std::string& res) {
    KvPairs kv = model_defaults();
    if (!config_path.empty()) overlay_config_file(kv, config_path);
    mf.overlay(kv);
    const ModelConfig mc = model_config_from_kv(kv);
    validate(mc);
    const auto [H, W] = parse_resolution(res);

    std::printf("%-14s %5s %5s %5s %4s %10s %14s\n", "layer", "cin", "cout", "kind", "res",
                "params", "macs");
    int64_t params = 0, macs = 0, body_macs = 0, body_std_macs = 0;
    for (const LayerSpec& l : plan_layers(mc)) {
        const int64_t p = layer_param_count(l);
        const int64_t m = layer_macs(l, H, W);
        params += p;
        macs += m;
        if (l.het) {
            body_macs += m;
            body_std_macs += l.cout * l.cin * 9 * (H / l.res_div) * (W / l.res_div);
        }
        std::printf("%-14s %5lld %5lld %5s %4d %10lld %14lld\n", l.name.c_str(),
                    static_cast<long long>(l.cin), static_cast<long long>(l.cout),
                    l.het ? "het" : "conv", l.res_div, static_cast<long long>(p),
                    static_cast<long long>(m));
    }
    std::printf("total_params=%lld\n", static_cast<long long>(params));
    std::printf("total_macs=%lld\n", static_cast<long long>(macs));
    std::printf("total_flops=%lld\n", static_cast<long long>(count_flops(mc, H, W)));
    if (body_std_macs > 0)
        std::printf("body_mac_ratio=%.6f\n",
                    static_cast<double>(body_macs) / static_cast<double>(body_std_macs));
    return 0;
}

// ------------------------------------------------------------ gradcheck

Tensor<double> rand_t(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// fractional parts kept in [0.1, 0.9] so central differences never straddle
// the bilinear lattice kinks
Tensor<double> rand_frac(Shape4 s, Rng& rng, double mag) {
    Tensor<double> t(s);
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double ip = std::floor(rng.uniform(-mag, mag));
        t[i] = ip + rng.uniform(0.1, 0.9);
    }
    return t;
}

Tensor<double> rand_nonzero(Shape4 s, Rng& rng) {
    Tensor<double> t(s);
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double v = rng.uniform(0.1, 1.0);
        t[i] = rng.uniform() < 0.5 ? -v : v;
    }
    return t;
}

Var<double> reduce(Tape<double>& tape, Var<double> x) {
    return mse_loss(x, tape.constant(Tensor<double>(x.value().shape())));
}

int run_gradcheck(int seeds, double tol) {
    struct Case {
        const char* name;
        std::function<GradcheckReport(Rng&)> run;
    };
    const int64_t cap = 120;
    const double h = 1e-5;
    std::vector<Case> cases;
    cases.push_back({"conv2d", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, conv2d(v[0], v[1], v[2]));
                             },
                             {rand_t({1, 2, 6, 5}, rng), rand_t({3, 2, 3, 3}, rng),
                              rand_t({1, 3, 1, 1}, rng)},
                             h, tol, cap, rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"hetconv2d", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, hetconv2d(v[0], v[1], v[2], v[3]));
                             },
                             {rand_t({1, 4, 6, 5}, rng), rand_t({4, 1, 3, 3}, rng),
                              rand_t({4, 3, 1, 1}, rng), rand_t({1, 4, 1, 1}, rng)},
                             h, tol, cap, rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"relu", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, relu(v[0]));
                             },
                             {rand_nonzero({1, 3, 5, 5}, rng)}, h, tol, cap,
                             rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"sigmoid", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, sigmoid(v[0]));
                             },
                             {rand_t({1, 3, 5, 5}, rng)}, h, tol, cap,
                             rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"avg_pool", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, avg_pool2x2(v[0]));
                             },
                             {rand_t({1, 3, 6, 6}, rng)}, h, tol, cap,
                             rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"upsample", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, upsample_bilinear2x(v[0]));
                             },
                             {rand_t({1, 3, 4, 5}, rng)}, h, tol, cap,
                             rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"bilinear_warp", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>& t, std::vector<Var<double>>& v) {
                                 return reduce(t, warp(v[0], v[1]));
                             },
                             {rand_t({1, 2, 6, 6}, rng), rand_frac({1, 2, 6, 6}, rng, 1.5)}, h,
                             tol, cap, rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"edsc_synthesis", [&](Rng& rng) {
                         const int n = 3;
                         return gradcheck(
                             [n](Tape<double>& t, std::vector<Var<double>>& v) {
                                 EdscVars<double> e;
                                 e.I1 = v[0];
                                 e.I2 = v[1];
                                 e.kv1 = v[2];
                                 e.kh1 = v[3];
                                 e.kv2 = v[4];
                                 e.kh2 = v[5];
                                 e.off1 = v[6];
                                 e.off2 = v[7];
                                 e.m1 = v[8];
                                 e.m2 = v[9];
                                 e.db = v[10];
                                 e.n = n;
                                 return reduce(t, edsc_apply(e));
                             },
                             {rand_t({1, 3, 6, 6}, rng, 0.0, 1.0),
                              rand_t({1, 3, 6, 6}, rng, 0.0, 1.0), rand_t({1, n, 6, 6}, rng),
                              rand_t({1, n, 6, 6}, rng), rand_t({1, n, 6, 6}, rng),
                              rand_t({1, n, 6, 6}, rng), rand_frac({1, 2 * n * n, 6, 6}, rng, 1.5),
                              rand_frac({1, 2 * n * n, 6, 6}, rng, 1.5),
                              rand_t({1, n * n, 6, 6}, rng, 0.0, 1.0),
                              rand_t({1, n * n, 6, 6}, rng, 0.0, 1.0),
                              rand_t({1, 3, 6, 6}, rng, -0.1, 0.1)},
                             h, tol, cap, rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"charbonnier", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>&, std::vector<Var<double>>& v) {
                                 return charbonnier_loss(v[0], v[1], 1e-6);
                             },
                             {rand_t({1, 3, 5, 5}, rng), rand_t({1, 3, 5, 5}, rng)}, h, tol,
                             cap, rng.uniform_int(1, 1 << 30));
                     }});
    cases.push_back({"mse", [&](Rng& rng) {
                         return gradcheck(
                             [](Tape<double>&, std::vector<Var<double>>& v) {
                                 return mse_loss(v[0], v[1]);
                             },
                             {rand_t({1, 3, 5, 5}, rng), rand_t({1, 3, 5, 5}, rng)}, h, tol,
                             cap, rng.uniform_int(1, 1 << 30));
                     }});

    std::vector<std::string> failed;
    for (const Case& c : cases) {
        double worst = 0.0;
        bool pass = true;
        std::string detail;
        for (int s = 1; s <= seeds; ++s) {
            Rng rng(static_cast<uint64_t>(s));
            const GradcheckReport rep = c.run(rng);
            worst = std::max(worst, rep.max_rel_err);
            if (!rep.pass) {
                pass = false;
                detail = rep.detail;
            }
        }
        std::printf("%-16s %s max_rel_err=%.3e\n", c.name, pass ? "PASS" : "FAIL", worst);
        if (!pass) {
            std::fprintf(stderr, "  %s\n", detail.c_str());
            failed.push_back(c.name);
        }
    }
    if (!failed.empty()) {
        std::string what = "gradient check failed:";
        for (const std::string& f : failed) what += " " + f;
        throw NumericError(what);
    }
    return 0;
}

// ----------------------------------------------------------- viz-kernels

Tensor<float> luma(const Tensor<float>& img) {
    const Shape4 s = img.shape();
    Tensor<float> out({1, 1, s.h, s.w});
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
            out.at(0, 0, y, x) = 0.299f * img.at(0, 0, y, x) + 0.587f * img.at(0, 1, y, x) +
                                 0.114f * img.at(0, 2, y, x);
    return out;
}

// green encodes sampling mass, dim gray carries the source frame for context
Tensor<float> render_map(const Tensor<float>& map, const Tensor<float>& frame) {
    const Shape4 s = map.shape();
    float peak = 0.0f;
    for (int64_t i = 0; i < map.numel(); ++i) peak = std::max(peak, map[i]);
    const Tensor<float> gray = luma(frame);
    Tensor<float> out({1, 3, s.h, s.w});
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x) {
            const float g = gray.at(0, 0, y, x) * 0.3f;
            const float m = peak > 0.0f ? map.at(0, 0, y, x) / peak : 0.0f;
            out.at(0, 0, y, x) = g;
            out.at(0, 1, y, x) = std::min(1.0f, g + 0.7f * m);
            out.at(0, 2, y, x) = g;
        }
    return out;
}

Tensor<float> keep_pixel(const Tensor<float>& kv, int64_t py, int64_t px) {
    Tensor<float> out(kv.shape());
    for (int64_t c = 0; c < kv.shape().c; ++c) out.at(0, c, py, px) = kv.at(0, c, py, px);
    return out;
}

int run_viz(const std::string& ckpt_path, const std::string& frame1, const std::string& frame2,
            const std::string& pixel, double t, const std::string& out_dir) {
    const std::vector<double> p = parse_double_list(pixel, "--pixel");
    if (p.size() != 2) throw UsageError("--pixel needs x,y");
    const int64_t px = static_cast<int64_t>(p[0]);
    const int64_t py = static_cast<int64_t>(p[1]);

    const Checkpoint ck = load_checkpoint(ckpt_path);
    Model<float> model = model_from_checkpoint<float>(ck);
    const Tensor<float> I1 = read_ppm<float>(frame1);
    const Tensor<float> I2 = read_ppm<float>(frame2);
    const Shape4 s = I1.shape();
    if (px < 0 || px >= s.w || py < 0 || py >= s.h)
        throw UsageError("--pixel lies outside the " + std::to_string(s.w) + "x" +
                         std::to_string(s.h) + " frame");
    if (!model.config.multi_time && t != 0.5)
        throw UsageError("this checkpoint is single-time; only --time 0.5 is valid");

    Tape<float> tape;
    SynthFields<float> f =
        model_forward(tape, model, tape.constant(I1), tape.constant(I2),
                      model.config.multi_time ? std::optional<double>(t) : std::nullopt);
    const Tensor<float>* m1 = f.m1.valid() ? &f.m1.value() : nullptr;
    const Tensor<float>* m2 = f.m2.valid() ? &f.m2.value() : nullptr;
    const int n = model.config.kernel_size;

    const Tensor<float> map1 = effective_sampling_map(keep_pixel(f.kv1.value(), py, px),
                                                      f.kh1.value(), m1, f.off1.value(), n);
    const Tensor<float> map2 = effective_sampling_map(keep_pixel(f.kv2.value(), py, px),
                                                      f.kh2.value(), m2, f.off2.value(), n);

    fs::create_directories(out_dir);
    write_ppm(out_dir + "/map1.ppm", render_map(map1, I1));
    write_ppm(out_dir + "/map2.ppm", render_map(map2, I2));
    write_ppm(out_dir + "/synth.ppm", f.out.value());

    KvPairs kv = ck.config;
    set_kv(kv, "viz.checkpoint", ckpt_path);
    set_kv(kv, "viz.pixel", pixel);
    set_kv(kv, "viz.time", fmt_g(t));
    write_run_config(out_dir + "/config.txt", kv);
    std::cout << "wrote " << out_dir << "/map1.ppm map2.ppm synth.ppm\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deformable separable convolution frame interpolation toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "worker threads (0 keeps the OpenMP default)");
    app.add_flag("--deterministic", deterministic,
                 "single-threaded, bit-reproducible execution");

    std::function<int()> run;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate synthetic training sequences");
    gen->fallthrough();
    std::string g_out, g_config, g_velocity;
    int g_size = 64, g_count = 20, g_frames = 7;
    uint64_t g_seed = 1;
    bool g_occ = false, g_force = false;
    gen->add_option("--out", g_out, "output dataset directory")->required();
    gen->add_option("--config,--spec", g_config, "key=value config file");
    gen->add_option("--size", g_size, "frame height and width");
    gen->add_option("--count", g_count, "number of sequences");
    gen->add_option("--frames", g_frames, "frames per sequence");
    gen->add_option("--seed", g_seed, "generator seed");
    gen->add_option("--velocity", g_velocity, "fixed vy,vx (default: random per sequence)");
    gen->add_flag("--occluders", g_occ, "give every second sequence a moving occluder");
    gen->add_flag("--force", g_force, "regenerate over an existing directory");
    gen->callback([&]() {
        run = [&]() {
            return run_gen_data(g_out, g_config, g_size, g_count, g_frames, g_seed, g_velocity,
                                g_occ, g_force);
        };
    });

    // train
    auto* tr = app.add_subcommand("train", "train a model on a sequence dataset");
    tr->fallthrough();
    std::string t_data, t_out, t_config, t_loss;
    double t_lr = 0, t_fw = 0;
    int t_epochs = 0, t_halve = 0, t_batch = 0, t_size = 0, t_val = 0, t_save = 0;
    uint64_t t_seed = 0;
    bool t_noaug = false;
    ModelFlags t_mf;
    tr->add_option("--data", t_data, "dataset directory from gen-data")->required();
    tr->add_option("--out", t_out, "run output directory")->required();
    tr->add_option("--config", t_config, "key=value config file");
    t_mf.attach(tr);
    auto* o_lr = tr->add_option("--lr", t_lr, "initial learning rate");
    auto* o_epochs = tr->add_option("--epochs", t_epochs, "training epochs");
    auto* o_halve = tr->add_option("--halve-every", t_halve, "halve lr every this many epochs");
    auto* o_batch = tr->add_option("--batch", t_batch, "gradient accumulation size");
    auto* o_loss = tr->add_option("--loss", t_loss, "charbonnier or charbonnier+feature");
    auto* o_fw = tr->add_option("--feature-weight", t_fw, "feature loss weight");
    auto* o_seed = tr->add_option("--seed", t_seed, "init and shuffle seed");
    auto* o_size = tr->add_option("--size", t_size, "expected frame size (checked)");
    auto* o_val = tr->add_option("--val-count", t_val, "sequences held out for validation");
    auto* o_save = tr->add_option("--save-every", t_save, "checkpoint every N epochs");
    auto* o_noaug = tr->add_flag("--no-augment", t_noaug, "disable flip augmentation");
    tr->callback([&, o_lr, o_epochs, o_halve, o_batch, o_loss, o_fw, o_seed, o_size, o_val,
                  o_save, o_noaug]() {
        run = [&, o_lr, o_epochs, o_halve, o_batch, o_loss, o_fw, o_seed, o_size, o_val, o_save,
               o_noaug]() {
            KvPairs fkv;
            if (o_lr->count()) set_kv(fkv, "train.lr", fmt_g(t_lr));
            if (o_epochs->count()) set_kv(fkv, "train.epochs", std::to_string(t_epochs));
            if (o_halve->count()) set_kv(fkv, "train.halve_every", std::to_string(t_halve));
            if (o_batch->count()) set_kv(fkv, "train.batch", std::to_string(t_batch));
            if (o_loss->count()) set_kv(fkv, "train.loss", t_loss);
            if (o_fw->count()) set_kv(fkv, "train.feature_weight", fmt_g(t_fw));
            if (o_seed->count()) set_kv(fkv, "seed", std::to_string(t_seed));
            if (o_size->count()) set_kv(fkv, "data.size", std::to_string(t_size));
            if (o_val->count()) set_kv(fkv, "train.val_count", std::to_string(t_val));
            if (o_save->count()) set_kv(fkv, "train.save_every", std::to_string(t_save));
            if (o_noaug->count()) set_kv(fkv, "train.augment", "0");
            return run_train(t_data, t_out, t_config, t_mf, fkv);
        };
    });

    // interp
    auto* in = app.add_subcommand("interp", "synthesize in-between frames");
    in->fallthrough();
    std::string i_ckpt, i_f1, i_f2, i_times, i_out;
    double i_t = 0.5;
    bool i_naive = false;
    in->add_option("--checkpoint,--ckpt", i_ckpt, "model checkpoint")->required();
    in->add_option("--frame1", i_f1, "first input frame (ppm)")->required();
    in->add_option("--frame2", i_f2, "second input frame (ppm)")->required();
    in->add_option("--time,--t", i_t, "target time in (0,1)");
    in->add_option("--times", i_times, "comma-separated target times");
    in->add_option("--out", i_out, "output .ppm file (single time) or directory")->required();
    in->add_flag("--naive-rescale", i_naive,
                 "rescale t=0.5 offsets instead of conditioning on t");
    in->callback([&]() {
        run = [&]() { return run_interp(i_ckpt, i_f1, i_f2, i_t, i_times, i_out, i_naive); };
    });

    // eval
    auto* ev = app.add_subcommand("eval", "compare prediction against ground truth");
    ev->fallthrough();
    std::string e_pred, e_gt, e_f1, e_f2, e_flow;
    int e_bw = 10;
    ev->add_option("--pred", e_pred, "predicted frame (ppm) or directory")->required();
    ev->add_option("--gt", e_gt, "ground-truth frame (ppm) or directory")->required();
    ev->add_option("--frame1", e_f1, "first input frame (for occlusion metrics)");
    ev->add_option("--frame2", e_f2, "second input frame (for occlusion metrics)");
    ev->add_option("--flow", e_flow, "ground-truth flow frame1->frame2 (flo1)");
    ev->add_option("--boundary-width", e_bw, "boundary band width in pixels");
    ev->callback([&]() {
        run = [&]() { return run_eval(e_pred, e_gt, e_f1, e_f2, e_flow, e_bw); };
    });

    // count
    auto* co = app.add_subcommand("count", "report per-layer parameters and MACs");
    co->fallthrough();
    std::string c_config, c_res = "256x256";
    ModelFlags c_mf;
    co->add_option("--config", c_config, "key=value config file");
    c_mf.attach(co);
    co->add_option("--res", c_res, "input resolution HxW for MAC counting");
    co->callback([&]() {
        run = [&]() { return run_count(c_config, c_mf, c_res); };
    });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
    gc->fallthrough();
    int gc_seeds = 3;
    double gc_tol = 1e-4;
    gc->add_option("--seeds", gc_seeds, "random restarts per op");
    gc->add_option("--tol", gc_tol, "relative error tolerance");
    gc->callback([&]() {
        run = [&]() { return run_gradcheck(gc_seeds, gc_tol); };
    });

    // viz-kernels
    auto* vz = app.add_subcommand("viz-kernels", "render effective sampling maps for a pixel");
    vz->fallthrough();
    std::string v_ckpt, v_f1, v_f2, v_pixel, v_out;
    double v_t = 0.5;
    vz->add_option("--checkpoint,--ckpt", v_ckpt, "model checkpoint")->required();
    vz->add_option("--frame1", v_f1, "first input frame (ppm)")->required();
    vz->add_option("--frame2", v_f2, "second input frame (ppm)")->required();
    vz->add_option("--pixel", v_pixel, "x,y of the synthesized pixel")->required();
    vz->add_option("--time", v_t, "target time (multi-time checkpoints)");
    vz->add_option("--out", v_out, "output directory")->required();
    vz->callback([&]() {
        run = [&]() { return run_viz(v_ckpt, v_f1, v_f2, v_pixel, v_t, v_out); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (deterministic)
            threading::set_threads(1);
        else if (threads > 0)
            threading::set_threads(threads);
        return run();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
