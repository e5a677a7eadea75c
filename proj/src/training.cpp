#include "edsc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "edsc/kernels.hpp"
#include "edsc/metrics.hpp"
#include "edsc/ops.hpp"
#include "edsc/rng.hpp"

namespace edsc {

void validate(const LossConfig& c) {
    if (!(c.epsilon > 0.0)) throw std::invalid_argument("loss epsilon must be positive");
    if (!(c.feature_weight >= 0.0))
        throw std::invalid_argument("feature weight must be nonnegative");
}

FeatureExtractor make_feature_extractor(uint64_t seed) {
    const int64_t widths[5] = {3, 8, 16, 32, 32};
    FeatureExtractor fx;
    Rng rng(seed);
    for (int l = 0; l < 4; ++l) {
        const int64_t cin = widths[l];
        const int64_t cout = widths[l + 1];
        Tensor<float> w({cout, cin, 3, 3});
        const double bound = std::sqrt(6.0 / static_cast<double>(cin * 9));
        for (int64_t i = 0; i < w.numel(); ++i)
            w[i] = static_cast<float>(rng.uniform(-bound, bound));
        fx.w.push_back(std::move(w));
        fx.b.emplace_back(Shape4{1, cout, 1, 1});
    }
    return fx;
}

template <typename T>
Var<T> extract_features(Tape<T>& tape, const FeatureExtractor& fx, Var<T> x) {
    const Shape4 s = x.value().shape();
    if (s.h % 16 != 0 || s.w % 16 != 0 || s.h == 0 || s.w == 0)
        throw std::invalid_argument("feature extractor needs H and W divisible by 16, got " +
                                    s.str());
    Var<T> h = x;
    for (size_t l = 0; l < fx.w.size(); ++l) {
        Var<T> w = tape.constant(fx.w[l].template cast<T>());
        Var<T> b = tape.constant(fx.b[l].template cast<T>());
        h = avg_pool2x2(relu(conv2d(h, w, b)));
    }
    return h;
}

template <typename T>
Var<T> feature_loss(Tape<T>& tape, const FeatureExtractor& fx, Var<T> pred, Var<T> gt) {
    return mse_loss(extract_features(tape, fx, pred), extract_features(tape, fx, gt));
}

template <typename T>
Var<T> training_loss(Tape<T>& tape, const LossConfig& c, const FeatureExtractor* fx,
                     Var<T> pred, Var<T> gt) {
    validate(c);
    Var<T> l = charbonnier_loss(pred, gt, static_cast<T>(c.epsilon));
    if (c.kind == LossKind::charbonnier_feature) {
        if (!fx) throw std::invalid_argument("feature loss requested without an extractor");
        l = add_scaled(l, feature_loss(tape, *fx, pred, gt),
                       static_cast<T>(c.feature_weight));
    }
    return l;
}

template <typename T>
OptimState<T> make_optim_state(const Model<T>& model, double lr) {
    OptimState<T> st;
    st.lr = lr;
    for (const auto& kv : model.params) {
        st.m.emplace(kv.first, Tensor<T>(kv.second.shape()));
        st.v.emplace(kv.first, Tensor<T>(kv.second.shape()));
    }
    return st;
}

template <typename T>
void adam_step(Model<T>& model, OptimState<T>& st) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (auto& kv : model.params) {
        const Tensor<T>& g = model.grads.at(kv.first);
        if (!kernels::all_finite(g))
            throw NumericError("non-finite gradient in '" + kv.first + "'");
        Tensor<T>& p = kv.second;
        Tensor<T>& m = st.m.at(kv.first);
        Tensor<T>& v = st.v.at(kv.first);
        const T b1 = static_cast<T>(st.beta1);
        const T b2 = static_cast<T>(st.beta2);
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const double mh = static_cast<double>(m[i]) / bc1;
            const double vh = static_cast<double>(v[i]) / bc2;
            p[i] -= static_cast<T>(st.lr * mh / (std::sqrt(vh) + st.eps));
        }
    }
}

template <typename T>
Tensor<T> flip_h(const Tensor<T>& x) {
    const Shape4 s = x.shape();
    Tensor<T> out(s);
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t xx = 0; xx < s.w; ++xx)
                    out.at(b, c, y, xx) = x.at(b, c, y, s.w - 1 - xx);
    return out;
}

template <typename T>
Tensor<T> flip_v(const Tensor<T>& x) {
    const Shape4 s = x.shape();
    Tensor<T> out(s);
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t xx = 0; xx < s.w; ++xx)
                    out.at(b, c, y, xx) = x.at(b, c, s.h - 1 - y, xx);
    return out;
}

namespace {

bool same_config(const ModelConfig& a, const ModelConfig& b) {
    return a.kernel_size == b.kernel_size && a.hetconv_p == b.hetconv_p &&
           a.widths == b.widths && a.est_widths == b.est_widths &&
           a.multi_time == b.multi_time && a.use_mask == b.use_mask &&
           a.use_bias == b.use_bias;
}

}  // namespace

template <typename T>
Model<T> dni_interpolate(const Model<T>& a, const Model<T>& b, double alpha) {
    if (!same_config(a.config, b.config))
        throw DataError("parameter interpolation needs identical model configs");
    if (a.params.size() != b.params.size())
        throw DataError("parameter interpolation needs identical parameter sets");
    Model<T> out;
    out.config = a.config;
    auto ia = a.params.begin();
    auto ib = b.params.begin();
    for (; ia != a.params.end(); ++ia, ++ib) {
        if (ia->first != ib->first)
            throw DataError("parameter sets differ: '" + ia->first + "' vs '" + ib->first +
                            "'");
        const Tensor<T>& ta = ia->second;
        const Tensor<T>& tb = ib->second;
        if (!(ta.shape() == tb.shape()))
            throw DataError("shape mismatch for parameter '" + ia->first + "'");
        Tensor<T> blend(ta.shape());
        const T wa = static_cast<T>(1.0 - alpha);
        const T wb = static_cast<T>(alpha);
        for (int64_t i = 0; i < ta.numel(); ++i) blend[i] = wa * ta[i] + wb * tb[i];
        out.params.emplace_hint(out.params.end(), ia->first, std::move(blend));
        out.grads.emplace_hint(out.grads.end(), ia->first, Tensor<T>(ta.shape()));
    }
    return out;
}

std::string log_line(const EpochLog& e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d, %.8g, %.8g, %.4f", e.epoch, e.lr, e.train_loss,
                  e.val_psnr);
    return std::string(buf);
}

namespace {

size_t mid_index(const SyntheticSequence& s) {
    for (size_t k = 0; k < s.times.size(); ++k)
        if (s.times[k] == 0.5) return k;
    throw DataError("single-time training needs a frame at t=0.5");
}

double mean_val_psnr(Model<float>& model, const std::vector<SyntheticSequence>& seqs) {
    double sum = 0.0;
    for (const auto& s : seqs) {
        const size_t k = mid_index(s);
        const std::optional<double> t =
            model.config.multi_time ? std::optional<double>(0.5) : std::nullopt;
        const Tensor<float> pred = interpolate(model, s.frames.front(), s.frames.back(), t);
        sum += psnr(pred, s.frames[k]);
    }
    return sum / static_cast<double>(seqs.size());
}

}  // namespace

TrainResult train(Model<float>& model, const std::vector<SyntheticSequence>& train_seqs,
                  const std::vector<SyntheticSequence>& val_seqs, const TrainConfig& cfg,
                  const std::function<void(const Model<float>&, const EpochLog&)>& on_epoch) {
    validate(cfg.loss);
    if (cfg.epochs < 1 || cfg.halve_every < 1 || cfg.batch < 1)
        throw std::invalid_argument("epochs, halve_every and batch must be positive");
    if (train_seqs.empty()) throw DataError("training dataset is empty");
    for (const auto& s : train_seqs) {
        if (s.frames.size() < 3 || s.times.size() != s.frames.size())
            throw DataError("training sequences need at least 3 timestamped frames");
        if (!model.config.multi_time) mid_index(s);
    }

    FeatureExtractor fx;
    const bool use_fx = cfg.loss.kind == LossKind::charbonnier_feature;
    if (use_fx) fx = make_feature_extractor();

    Rng rng(cfg.seed);
    OptimState<float> opt = make_optim_state(model, cfg.lr);
    TrainResult res;
    std::map<std::string, Tensor<float>> last_good = model.params;

    std::vector<size_t> order(train_seqs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        opt.lr = cfg.lr * std::pow(0.5, static_cast<double>((epoch - 1) / cfg.halve_every));
        try {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1],
                          order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

            double loss_sum = 0.0;
            int pending = 0;
            zero_grads(model);
            for (size_t vi = 0; vi < order.size(); ++vi) {
                const SyntheticSequence& s = train_seqs[order[vi]];
                size_t k = 0;
                std::optional<double> t;
                if (model.config.multi_time) {
                    const int64_t inner = static_cast<int64_t>(s.times.size()) - 2;
                    k = static_cast<size_t>(1 + rng.uniform_int(0, inner - 1));
                    t = s.times[k];
                } else {
                    k = mid_index(s);
                }
                res.time_draws[s.times[k]] += 1;

                Tensor<float> i1 = s.frames.front();
                Tensor<float> i2 = s.frames.back();
                Tensor<float> gt = s.frames[k];
                if (cfg.augment) {
                    if (rng.uniform() < 0.5) {
                        i1 = flip_h(i1);
                        i2 = flip_h(i2);
                        gt = flip_h(gt);
                    }
                    if (rng.uniform() < 0.5) {
                        i1 = flip_v(i1);
                        i2 = flip_v(i2);
                        gt = flip_v(gt);
                    }
                }

                Tape<float> tape;
                SynthFields<float> fields = model_forward(
                    tape, model, tape.constant(std::move(i1)), tape.constant(std::move(i2)), t);
                Var<float> loss = training_loss(tape, cfg.loss, use_fx ? &fx : nullptr,
                                                fields.out, tape.constant(std::move(gt)));
                const double l = static_cast<double>(loss.value()[0]);
                if (!std::isfinite(l))
                    throw NumericError("training loss is not finite at epoch " +
                                       std::to_string(epoch));
                loss_sum += l;
                tape.backward(loss);
                ++pending;

                if (pending == cfg.batch || vi + 1 == order.size()) {
                    const float inv = 1.0f / static_cast<float>(pending);
                    for (auto& kv : model.grads) {
                        Tensor<float>& g = kv.second;
                        for (int64_t j = 0; j < g.numel(); ++j) g[j] *= inv;
                    }
                    adam_step(model, opt);
                    zero_grads(model);
                    pending = 0;
                }
            }

            EpochLog e;
            e.epoch = epoch;
            e.lr = opt.lr;
            e.train_loss = loss_sum / static_cast<double>(order.size());
            e.val_psnr = mean_val_psnr(model, val_seqs.empty() ? train_seqs : val_seqs);
            res.log.push_back(e);
            last_good = model.params;
            if (on_epoch) on_epoch(model, e);
        } catch (const NumericError& err) {
            model.params = last_good;
            throw NumericError(std::string(err.what()) +
                               "; parameters restored to the last completed epoch state");
        }
    }
    return res;
}

template Var<float> extract_features(Tape<float>&, const FeatureExtractor&, Var<float>);
template Var<double> extract_features(Tape<double>&, const FeatureExtractor&, Var<double>);
template Var<float> feature_loss(Tape<float>&, const FeatureExtractor&, Var<float>, Var<float>);
template Var<double> feature_loss(Tape<double>&, const FeatureExtractor&, Var<double>,
                                  Var<double>);
template Var<float> training_loss(Tape<float>&, const LossConfig&, const FeatureExtractor*,
                                  Var<float>, Var<float>);
template Var<double> training_loss(Tape<double>&, const LossConfig&, const FeatureExtractor*,
                                   Var<double>, Var<double>);
template OptimState<float> make_optim_state(const Model<float>&, double);
template OptimState<double> make_optim_state(const Model<double>&, double);
template void adam_step(Model<float>&, OptimState<float>&);
template void adam_step(Model<double>&, OptimState<double>&);
template Tensor<float> flip_h(const Tensor<float>&);
template Tensor<double> flip_h(const Tensor<double>&);
template Tensor<float> flip_v(const Tensor<float>&);
template Tensor<double> flip_v(const Tensor<double>&);
template Model<float> dni_interpolate(const Model<float>&, const Model<float>&, double);
template Model<double> dni_interpolate(const Model<double>&, const Model<double>&, double);

}  // namespace edsc
