#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "edsc/deformable.hpp"
#include "edsc/gradcheck.hpp"
#include "edsc/model.hpp"
#include "edsc/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace edsc;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.kernel_size = 3;
    c.widths = {8, 16};
    c.est_widths = {8, 8, 8};
    return c;
}

template <typename T>
bool params_equal(const Model<T>& a, const Model<T>& b) {
    if (a.params.size() != b.params.size()) return false;
    auto it = b.params.begin();
    for (const auto& [name, t] : a.params) {
        if (it->first != name || !testutil::bitwise_equal(t, it->second)) return false;
        ++it;
    }
    return true;
}

}  // namespace

TEST_CASE("build is deterministic in the seed") {
    auto a = build_model<float>(tiny_config(), 7);
    auto b = build_model<float>(tiny_config(), 7);
    auto c = build_model<float>(tiny_config(), 8);
    CHECK(params_equal(a, b));
    CHECK(!params_equal(a, c));
}

TEST_CASE("planned parameter count equals built element count") {
    for (ModelConfig c : {tiny_config(), ModelConfig{}, full_scale_config()}) {
        CHECK(count_params(c) == count_params(build_model<float>(c, 1)));
        c.multi_time = true;
        CHECK(count_params(c) == count_params(build_model<float>(c, 1)));
        c.use_mask = false;
        c.use_bias = false;
        CHECK(count_params(c) == count_params(build_model<float>(c, 1)));
    }
}

TEST_CASE("mixed-kernel layer accounting closed form") {
    // Cin=16, Cout=32, P=4: per filter 4 channels keep 3x3, 12 drop to 1x1.
    LayerSpec mixed{"l", 16, 32, true, 4, 1, false};
    LayerSpec full{"l", 16, 32, true, 16, 1, false};  // P=1 keeps everything 3x3
    CHECK(layer_weight_count(mixed) == 1536);
    CHECK(layer_weight_count(full) == 4608);
    CHECK(3 * layer_weight_count(mixed) == layer_weight_count(full));
    CHECK(3 * layer_macs(mixed, 24, 20) == layer_macs(full, 24, 20));
    CHECK(layer_param_count(mixed) == 1536 + 32);
}

TEST_CASE("body layers at P=4 cost exactly one third where P divides Cin") {
    ModelConfig c4;  // desk widths, P=4
    ModelConfig c1 = c4;
    c1.hetconv_p = 1;
    auto p4 = plan_layers(c4), p1 = plan_layers(c1);
    REQUIRE(p4.size() == p1.size());
    int checked = 0;
    for (size_t i = 0; i < p4.size(); ++i) {
        if (!p4[i].het || p4[i].cin % 4 != 0) continue;
        CHECK(3 * layer_weight_count(p4[i]) == layer_weight_count(p1[i]));
        ++checked;
    }
    CHECK(checked >= 7);  // everything but the 6-channel stem
}

TEST_CASE("model cost decreases strictly with the part count") {
    const ModelConfig base = full_scale_config();
    int64_t prev_params = 0, prev_flops = 0;
    for (int p : {1, 2, 4, 8, 16, 32}) {
        ModelConfig c = base;
        c.hetconv_p = p;
        const int64_t np = count_params(c);
        const int64_t nf = count_flops(c, 128, 128);
        if (p > 1) {
            CHECK(np < prev_params);
            CHECK(nf < prev_flops);
        }
        prev_params = np;
        prev_flops = nf;
    }
}

TEST_CASE("control channel adds only the first-layer planes") {
    ModelConfig c = full_scale_config();
    const int64_t without = count_params(c);
    c.multi_time = true;
    const int64_t with = count_params(c);
    // 10 frame-branch estimators, one extra input plane of 3x3 weights each.
    CHECK(with - without == 10 * c.est_widths[0] * 9);
    CHECK(double(with - without) / double(without) < 1e-3);
}

TEST_CASE("counting convention base case") {
    // A single 3x3 conv, 1 channel to 1 channel, at 1x1 resolution.
    LayerSpec l{"l", 1, 1, false, 0, 1, false};
    CHECK(layer_macs(l, 1, 1) == 9);
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.kernel_size = 4;
    CHECK_THROWS_AS(plan_layers(c), std::invalid_argument);
    c = ModelConfig{};
    c.widths = {16};
    CHECK_THROWS_AS(plan_layers(c), std::invalid_argument);
    c = ModelConfig{};
    c.est_widths = {8, 8};
    CHECK_THROWS_AS(plan_layers(c), std::invalid_argument);
    c = ModelConfig{};
    c.kernel_size = 13;  // beyond the fused kernel's supported edge
    CHECK_THROWS_AS(plan_layers(c), std::invalid_argument);
}

TEST_CASE("forward shape contract, mask range, zero offsets at init") {
    auto m = build_model<float>(tiny_config(), 3);
    Rng rng(5);
    auto I1 = random_tensor<float>({2, 3, 8, 8}, rng, 0.0, 1.0);
    auto I2 = random_tensor<float>({2, 3, 8, 8}, rng, 0.0, 1.0);

    Tape<float> tape;
    auto f = model_forward(tape, m, tape.constant(I1), tape.constant(I2));

    const int n = 3;
    CHECK(f.out.value().shape() == I1.shape());
    const Shape4 ks{2, n, 8, 8};
    CHECK(f.kv1.value().shape() == ks);
    CHECK(f.kh2.value().shape() == ks);
    const Shape4 os{2, 2 * n * n, 8, 8};
    CHECK(f.off1.value().shape() == os);
    const Shape4 ms{2, n * n, 8, 8};
    CHECK(f.m1.value().shape() == ms);
    const Shape4 bs{2, 3, 8, 8};
    CHECK(f.db.value().shape() == bs);

    for (int64_t i = 0; i < f.m1.value().numel(); ++i) {
        CHECK(f.m1.value()[i] > 0.0f);
        CHECK(f.m1.value()[i] < 1.0f);
    }
    for (int64_t i = 0; i < f.off1.value().numel(); ++i) CHECK(f.off1.value()[i] == 0.0f);
    for (int64_t i = 0; i < f.off2.value().numel(); ++i) CHECK(f.off2.value()[i] == 0.0f);
}

TEST_CASE("fresh model output equals masked separable synthesis") {
    // Offsets start at zero, so the first forward must sit exactly on the
    // regular-grid reduction.
    auto cfg = tiny_config();
    auto m = build_model<double>(cfg, 11);
    Rng rng(13);
    auto I1 = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto I2 = random_tensor<double>({1, 3, 8, 8}, rng, 0.0, 1.0);

    Tape<double> tape;
    auto f = model_forward(tape, m, tape.constant(I1), tape.constant(I2));
    auto want = testutil::naive_edsc(I1, I2, f.kv1.value(), f.kh1.value(), f.kv2.value(),
                                     f.kh2.value(), f.off1.value(), f.off2.value(),
                                     &f.m1.value(), &f.m2.value(), &f.db.value(), 3);
    CHECK(max_abs_diff(f.out.value(), want) <= 1e-10);

    // And with masks and bias disabled, against the independent reduction.
    cfg.use_mask = false;
    cfg.use_bias = false;
    auto m2 = build_model<double>(cfg, 11);
    Tape<double> tape2;
    auto g = model_forward(tape2, m2, tape2.constant(I1), tape2.constant(I2));
    auto sep = sepconv_reference(I1, I2, g.kv1.value(), g.kh1.value(), g.kv2.value(),
                                 g.kh2.value(), 3);
    CHECK(max_abs_diff(g.out.value(), sep) <= 1e-12);
}

TEST_CASE("time step argument policy") {
    auto single = build_model<float>(tiny_config(), 1);
    ModelConfig mc = tiny_config();
    mc.multi_time = true;
    auto multi = build_model<float>(mc, 1);
    Rng rng(17);
    auto I1 = random_tensor<float>({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto I2 = random_tensor<float>({1, 3, 8, 8}, rng, 0.0, 1.0);

    CHECK_THROWS_AS(interpolate(single, I1, I2, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(multi, I1, I2), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(multi, I1, I2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(multi, I1, I2, 0.0), std::invalid_argument);
    CHECK_NOTHROW(interpolate(single, I1, I2));
    CHECK_NOTHROW(interpolate(multi, I1, I2, 0.3));
}

TEST_CASE("time channel reaches the output") {
    ModelConfig mc = tiny_config();
    mc.multi_time = true;
    auto m = build_model<float>(mc, 19);
    Rng rng(23);
    // Asymmetric frames so the two branches cannot cancel.
    auto I1 = random_tensor<float>({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto I2 = random_tensor<float>({1, 3, 8, 8}, rng, 0.3, 0.9);

    auto a = interpolate(m, I1, I2, 0.3);
    auto b = interpolate(m, I1, I2, 0.7);
    CHECK(max_abs_diff(a, b) > 1e-6);

    // Repeating the same t is bitwise deterministic.
    CHECK(testutil::bitwise_equal(a, interpolate(m, I1, I2, 0.3)));
}

TEST_CASE("resolution must divide by the level count") {
    auto m = build_model<float>(ModelConfig{}, 1);  // 4 levels -> divisor 8
    Rng rng(29);
    auto I1 = random_tensor<float>({1, 3, 12, 12}, rng, 0.0, 1.0);
    CHECK_THROWS_AS(interpolate(m, I1, I1), std::invalid_argument);
}

TEST_CASE("end-to-end gradients through the whole network") {
    ModelConfig c;
    c.kernel_size = 3;
    c.widths = {4, 8, 8};
    c.est_widths = {4, 4, 4};
    auto m = build_model<double>(c, 31);
    Rng rng(37);
    // Nudge the offset finals off zero so sampling points leave the integer
    // lattice (the coordinate derivative is one-sided exactly on it).
    for (const char* name : {"dy1.out", "dx1.out", "dy2.out", "dx2.out"}) {
        auto& w = m.params.at(std::string(name) + ".w");
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(0.05, 0.15);
        auto& b = m.params.at(std::string(name) + ".b");
        for (int64_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform(0.05, 0.15);
    }

    auto I1 = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);
    auto I2 = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);
    auto target = random_tensor<double>({1, 3, 8, 8}, rng, 0.05, 0.95);

    // Gradient of loss(forward) w.r.t. the input frames, against central
    // differences. This drives every layer's backward.
    auto fn = [&](Tape<double>& tape, std::vector<Var<double>>& in) {
        return charbonnier_loss(model_forward(tape, m, in[0], in[1]).out,
                                tape.constant(target), 1e-6);
    };
    auto rep = gradcheck(fn, {I1, I2}, 1e-5, 1e-3, 40, 0xabc);
    INFO(rep.detail);
    CHECK(rep.pass);

    // Spot-check parameter gradients by direct perturbation.
    const auto loss_value = [&]() {
        Tape<double> tape;
        auto out = model_forward(tape, m, tape.constant(I1), tape.constant(I2)).out;
        return charbonnier_loss(out, tape.constant(target), 1e-6).value()[0];
    };
    zero_grads(m);
    {
        Tape<double> tape;
        auto loss = charbonnier_loss(
            model_forward(tape, m, tape.constant(I1), tape.constant(I2)).out,
            tape.constant(target), 1e-6);
        tape.backward(loss);
    }
    Rng pick(41);
    int tested = 0;
    for (const char* name : {"enc0.a.w3", "enc1.b.w1", "dec1.w3", "kv1.c0.w", "m2.out.w",
                             "dy1.out.w", "bias.out.b", "kh2.c2.w"}) {
        auto& w = m.params.at(name);
        const auto& g = m.grads.at(name);
        const int64_t i = pick.uniform_int(0, w.numel() - 1);
        const double keep = w[i], h = 1e-5;
        w[i] = keep + h;
        const double up = loss_value();
        w[i] = keep - h;
        const double dn = loss_value();
        w[i] = keep;
        const double fd = (up - dn) / (2 * h);
        const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1.0});
        INFO(name << "[" << i << "] analytic " << g[i] << " numeric " << fd);
        CHECK(rel <= 1e-3);
        ++tested;
    }
    CHECK(tested == 8);
}
