#include "edsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edsc/kernels.hpp"
#include "edsc/ops.hpp"

namespace edsc {

namespace {

// The estimator subnets, in build order. branch selects which control plane
// the subnet sees in multi-time mode (the bias head sees none).
struct EstDef {
    const char* name;
    int branch;        // 0 none, 1 frame 1, 2 frame 2
    int out_kind;      // 0: n channels, 1: n^2, 2: 3
    bool sigmoid_out;  // masks squash into (0,1)
    bool zero_final;   // offsets start at zero
};

constexpr EstDef kEstimators[] = {
    {"kv1", 1, 0, false, false}, {"kh1", 1, 0, false, false}, {"dy1", 1, 1, false, true},
    {"dx1", 1, 1, false, true},  {"m1", 1, 1, true, false},   {"kv2", 2, 0, false, false},
    {"kh2", 2, 0, false, false}, {"dy2", 2, 1, false, true},  {"dx2", 2, 1, false, true},
    {"m2", 2, 1, true, false},   {"bias", 0, 2, false, false},
};

bool estimator_active(const ModelConfig& c, const EstDef& e) {
    if (e.name[0] == 'm' && !c.use_mask) return false;
    if (e.branch == 0 && !c.use_bias) return false;
    return true;
}

int64_t est_out_channels(const ModelConfig& c, const EstDef& e) {
    const int64_t n = c.kernel_size;
    return e.out_kind == 0 ? n : (e.out_kind == 1 ? n * n : 3);
}

int64_t het_c3(int64_t cin, int p) {
    const int64_t pe = std::min<int64_t>(p, cin);
    return (cin + pe - 1) / pe;
}

}  // namespace

ModelConfig full_scale_config() {
    ModelConfig c;
    c.widths = {64, 128, 256, 512, 1024};
    c.est_widths = {64, 32, 32};
    return c;
}

void validate(const ModelConfig& c) {
    if (c.kernel_size < 1 || c.kernel_size % 2 == 0 || c.kernel_size > kernels::kMaxKernelEdge)
        throw std::invalid_argument("kernel_size must be odd in [1," +
                                    std::to_string(kernels::kMaxKernelEdge) + "], got " +
                                    std::to_string(c.kernel_size));
    if (c.hetconv_p < 1) throw std::invalid_argument("hetconv_p must be >= 1");
    if (c.widths.size() < 2)
        throw std::invalid_argument("need at least 2 encoder levels, got " +
                                    std::to_string(c.widths.size()));
    for (int w : c.widths)
        if (w < 1) throw std::invalid_argument("encoder widths must be positive");
    if (c.est_widths.size() != 3)
        throw std::invalid_argument("estimator trunk needs exactly 3 widths, got " +
                                    std::to_string(c.est_widths.size()));
    for (int w : c.est_widths)
        if (w < 1) throw std::invalid_argument("estimator widths must be positive");
}

std::vector<LayerSpec> plan_layers(const ModelConfig& c) {
    validate(c);
    std::vector<LayerSpec> plan;
    const int L = static_cast<int>(c.widths.size());
    const auto het = [&](std::string name, int64_t cin, int64_t cout, int div) {
        plan.push_back({std::move(name), cin, cout, true, het_c3(cin, c.hetconv_p), div, false});
    };
    for (int i = 0; i < L; ++i) {
        const int64_t cin = i == 0 ? 6 : c.widths[i - 1];
        het("enc" + std::to_string(i) + ".a", cin, c.widths[i], 1 << i);
        het("enc" + std::to_string(i) + ".b", c.widths[i], c.widths[i], 1 << i);
    }
    for (int i = L - 2; i >= 1; --i)
        het("dec" + std::to_string(i), c.widths[i + 1], c.widths[i], 1 << i);

    for (const EstDef& e : kEstimators) {
        if (!estimator_active(c, e)) continue;
        const std::string base(e.name);
        const int64_t cin0 = c.widths[1] + (c.multi_time && e.branch != 0 ? 1 : 0);
        const int64_t w0 = c.est_widths[0], w1 = c.est_widths[1], w2 = c.est_widths[2];
        plan.push_back({base + ".c0", cin0, w0, false, 0, 2, false});
        plan.push_back({base + ".c1", w0, w1, false, 0, 2, false});
        plan.push_back({base + ".c2", w1, w2, false, 0, 2, false});
        plan.push_back({base + ".out", w2, est_out_channels(c, e), false, 0, 1, e.zero_final});
    }
    return plan;
}

int64_t layer_weight_count(const LayerSpec& l) {
    const int64_t per_filter = l.het ? l.c3 * 9 + (l.cin - l.c3) : l.cin * 9;
    return l.cout * per_filter;
}

int64_t layer_param_count(const LayerSpec& l) { return layer_weight_count(l) + l.cout; }

int64_t layer_macs(const LayerSpec& l, int64_t H, int64_t W) {
    return layer_weight_count(l) * (H / l.res_div) * (W / l.res_div);
}

int64_t count_params(const ModelConfig& c) {
    int64_t total = 0;
    for (const LayerSpec& l : plan_layers(c)) total += layer_param_count(l);
    return total;
}

int64_t count_flops(const ModelConfig& c, int64_t H, int64_t W) {
    int64_t macs = 0;
    for (const LayerSpec& l : plan_layers(c)) macs += layer_macs(l, H, W);
    return 2 * macs;
}

template <typename T>
Model<T> build_model(const ModelConfig& config, uint64_t seed) {
    Model<T> m;
    m.config = config;
    Rng rng(seed);
    for (const LayerSpec& l : plan_layers(config)) {
        const int64_t fan_in = l.het ? l.c3 * 9 + (l.cin - l.c3) : l.cin * 9;
        const double bound = std::sqrt(6.0 / double(fan_in));
        const auto init = [&](Tensor<T>& w) {
            if (!l.zero_init)
                for (int64_t i = 0; i < w.numel(); ++i)
                    w[i] = static_cast<T>(rng.uniform(-bound, bound));
        };
        if (l.het) {
            Tensor<T> w3({l.cout, l.c3, 3, 3});
            Tensor<T> w1({l.cout, l.cin - l.c3, 1, 1});
            init(w3);
            init(w1);
            m.params.emplace(l.name + ".w3", std::move(w3));
            m.params.emplace(l.name + ".w1", std::move(w1));
        } else {
            Tensor<T> w({l.cout, l.cin, 3, 3});
            init(w);
            m.params.emplace(l.name + ".w", std::move(w));
        }
        m.params.emplace(l.name + ".b", Tensor<T>({1, l.cout, 1, 1}));
    }
    for (const auto& [name, t] : m.params) m.grads.emplace(name, Tensor<T>(t.shape()));
    return m;
}

template <typename T>
int64_t count_params(const Model<T>& m) {
    int64_t total = 0;
    for (const auto& [name, t] : m.params) total += t.numel();
    return total;
}

template <typename T>
void zero_grads(Model<T>& m) {
    for (auto& [name, g] : m.grads) g.fill(T(0));
}

namespace {

template <typename T>
Var<T> param(Tape<T>& tape, Model<T>& m, const std::string& name) {
    auto it = m.params.find(name);
    if (it == m.params.end()) throw std::logic_error("missing model parameter: " + name);
    return tape.external(it->second, m.grads.at(name));
}

template <typename T>
Var<T> het_layer(Tape<T>& tape, Model<T>& m, const std::string& name, Var<T> x) {
    return hetconv2d(x, param(tape, m, name + ".w3"), param(tape, m, name + ".w1"),
                     param(tape, m, name + ".b"));
}

template <typename T>
Var<T> conv_layer(Tape<T>& tape, Model<T>& m, const std::string& name, Var<T> x) {
    return conv2d(x, param(tape, m, name + ".w"), param(tape, m, name + ".b"));
}

// Shared estimator head: three convs at half resolution, upsample, final conv.
template <typename T>
Var<T> est_head(Tape<T>& tape, Model<T>& m, const std::string& base, Var<T> feat) {
    Var<T> h = relu(conv_layer(tape, m, base + ".c0", feat));
    h = relu(conv_layer(tape, m, base + ".c1", h));
    h = relu(conv_layer(tape, m, base + ".c2", h));
    h = upsample_bilinear2x(h);
    return conv_layer(tape, m, base + ".out", h);
}

}  // namespace

template <typename T>
SynthFields<T> model_forward(Tape<T>& tape, Model<T>& model, Var<T> I1, Var<T> I2,
                             std::optional<double> t) {
    const ModelConfig& c = model.config;
    const Shape4 s = I1.value().shape();
    if (!(I2.value().shape() == s))
        throw std::invalid_argument("frame shapes differ: " + s.str() + " vs " +
                                    I2.value().shape().str());
    if (s.c != 3) throw std::invalid_argument("frames must have 3 channels, got " + s.str());
    const int L = static_cast<int>(c.widths.size());
    const int64_t div = int64_t(1) << (L - 1);
    if (s.h % div != 0 || s.w % div != 0 || s.h / div < 1 || s.w / div < 1)
        throw std::invalid_argument("resolution " + s.str() + " not divisible by " +
                                    std::to_string(div));
    if (c.multi_time) {
        if (!t) throw std::invalid_argument("this model needs a time step in (0,1)");
        if (!(*t > 0.0 && *t < 1.0))
            throw std::invalid_argument("time step must lie in (0,1), got " +
                                        std::to_string(*t));
    } else if (t) {
        throw std::invalid_argument("single-time model takes no time step");
    }

    // Encoder-decoder over the concatenated frames.
    Var<T> x = concat_channels<T>({I1, I2});
    std::vector<Var<T>> lev(L);
    for (int i = 0; i < L; ++i) {
        if (i > 0) x = avg_pool2x2(x);
        const std::string base = "enc" + std::to_string(i);
        x = relu(het_layer(tape, model, base + ".a", x));
        x = relu(het_layer(tape, model, base + ".b", x));
        lev[i] = x;
    }
    for (int i = L - 2; i >= 1; --i) {
        x = upsample_bilinear2x(x);
        x = het_layer(tape, model, "dec" + std::to_string(i), x);
        x = relu(add(x, lev[i]));
    }
    Var<T> feat = x;  // [B, widths[1], H/2, W/2]

    // Constant control planes at feature resolution.
    Var<T> plane1, plane2;
    if (c.multi_time) {
        const Shape4 ps{s.b, 1, s.h / 2, s.w / 2};
        plane1 = tape.constant(Tensor<T>(ps, static_cast<T>(*t)));
        plane2 = tape.constant(Tensor<T>(ps, static_cast<T>(1.0 - *t)));
    }
    const auto branch_feat = [&](int branch) {
        if (!c.multi_time || branch == 0) return feat;
        return concat_channels<T>({feat, branch == 1 ? plane1 : plane2});
    };

    std::map<std::string, Var<T>> heads;
    for (const EstDef& e : kEstimators) {
        if (!estimator_active(c, e)) continue;
        Var<T> o = est_head(tape, model, e.name, branch_feat(e.branch));
        if (e.sigmoid_out) o = sigmoid(o);
        heads[e.name] = o;
    }

    SynthFields<T> f;
    f.kv1 = heads.at("kv1");
    f.kh1 = heads.at("kh1");
    f.kv2 = heads.at("kv2");
    f.kh2 = heads.at("kh2");
    f.off1 = concat_channels<T>({heads.at("dy1"), heads.at("dx1")});
    f.off2 = concat_channels<T>({heads.at("dy2"), heads.at("dx2")});
    if (c.use_mask) {
        f.m1 = heads.at("m1");
        f.m2 = heads.at("m2");
    }
    if (c.use_bias) f.db = heads.at("bias");

    EdscVars<T> v;
    v.I1 = I1;
    v.I2 = I2;
    v.kv1 = f.kv1;
    v.kh1 = f.kh1;
    v.kv2 = f.kv2;
    v.kh2 = f.kh2;
    v.off1 = f.off1;
    v.off2 = f.off2;
    v.m1 = f.m1;
    v.m2 = f.m2;
    v.db = f.db;
    v.n = c.kernel_size;
    f.out = edsc_apply(v);
    return f;
}

template <typename T>
Tensor<T> interpolate(Model<T>& model, const Tensor<T>& I1, const Tensor<T>& I2,
                      std::optional<double> t) {
    Tape<T> tape;
    Var<T> v1 = tape.constant(I1);
    Var<T> v2 = tape.constant(I2);
    return model_forward(tape, model, v1, v2, t).out.value();
}

#define EDSC_MODEL_INSTANTIATE(T)                                                              \
    template Model<T> build_model<T>(const ModelConfig&, uint64_t);                            \
    template int64_t count_params<T>(const Model<T>&);                                         \
    template void zero_grads<T>(Model<T>&);                                                    \
    template SynthFields<T> model_forward<T>(Tape<T>&, Model<T>&, Var<T>, Var<T>,              \
                                             std::optional<double>);                           \
    template Tensor<T> interpolate<T>(Model<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                      std::optional<double>);

EDSC_MODEL_INSTANTIATE(float)
EDSC_MODEL_INSTANTIATE(double)

#undef EDSC_MODEL_INSTANTIATE

}  // namespace edsc
