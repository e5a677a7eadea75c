#include <doctest.h>

#include <cmath>
#include <vector>

#include "edsc/datagen.hpp"
#include "edsc/metrics.hpp"
#include "edsc/sampling.hpp"
#include "test_util.hpp"

using namespace edsc;
using testutil::bitwise_equal;

namespace {

// Coverage-weighted centroid of one alpha plane, double accumulation.
std::pair<double, double> alpha_centroid(const Tensor<float>& alpha) {
    const Shape4 s = alpha.shape();
    double mass = 0, my = 0, mx = 0;
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x) {
            const double a = alpha.plane(0, 0)[y * s.w + x];
            mass += a;
            my += a * y;
            mx += a * x;
        }
    REQUIRE(mass > 0);
    return {my / mass, mx / mass};
}

double alpha_mass(const Tensor<float>& alpha) {
    double m = 0;
    for (int64_t i = 0; i < alpha.numel(); ++i) m += alpha[i];
    return m;
}

}  // namespace

TEST_CASE("times: seven frames pin the published steps, other counts spread evenly") {
    const std::vector<double> seven = {0.0, 0.167, 0.333, 0.5, 0.667, 0.833, 1.0};
    CHECK(sequence_times(7) == seven);
    const std::vector<double> three = {0.0, 0.5, 1.0};
    CHECK(sequence_times(3) == three);
    const std::vector<double> five = {0.0, 0.25, 0.5, 0.75, 1.0};
    CHECK(sequence_times(5) == five);
    CHECK(sequence_times(4).back() == 1.0);
    CHECK_THROWS_AS(sequence_times(2), std::invalid_argument);
}

TEST_CASE("generation is a pure function of spec and seed") {
    MotionSpec spec;
    spec.height = 24;
    spec.width = 28;
    spec.frame_count = 3;
    spec.bg_vy = 1.5;
    spec.bg_vx = -0.75;
    spec.with_occluder = true;
    spec.occ_size = 8;
    spec.occ_cy = 10;
    spec.occ_cx = 12;
    spec.occ_vy = 2;
    spec.occ_vx = 3;
    spec.occ_spin = 0.3;

    const auto a = gen_sequence(spec, 77);
    const auto b = gen_sequence(spec, 77);
    REQUIRE(a.frames.size() == 3);
    for (size_t k = 0; k < a.frames.size(); ++k) {
        CHECK(bitwise_equal(a.frames[k], b.frames[k]));
        CHECK(bitwise_equal(a.occ_alpha[k], b.occ_alpha[k]));
    }
    CHECK(bitwise_equal(a.gt_flow, b.gt_flow));

    const auto c = gen_sequence(spec, 78);
    CHECK_FALSE(bitwise_equal(a.frames[0], c.frames[0]));
}

TEST_CASE("pure translation: the flow is the velocity field and warping undoes it") {
    MotionSpec spec;
    spec.height = 32;
    spec.width = 32;
    spec.frame_count = 3;
    spec.bg_vy = 3;
    spec.bg_vx = -2;

    auto seq = gen_sequence(spec, 5);
    CHECK(seq.occ_alpha.empty());
    for (int64_t i = 0; i < 32 * 32; ++i) {
        CHECK(seq.gt_flow.plane(0, 0)[i] == 3.0f);
        CHECK(seq.gt_flow.plane(0, 1)[i] == -2.0f);
    }
    // integer velocity lands on grid points, so the warp is exact wherever
    // the source pixel stays inside the frame
    const auto warped = flow_warp(seq.frames.back(), seq.gt_flow);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 32 - 3; ++y)
            for (int64_t x = 2; x < 32; ++x)
                CHECK(warped.at(0, c, y, x) == seq.frames.front().at(0, c, y, x));

    // fractional velocity: constancy holds to resampling error, well under
    // the texture contrast
    spec.bg_vy = 1.5;
    spec.bg_vx = -2.25;
    seq = gen_sequence(spec, 5);
    const auto warped2 = flow_warp(seq.frames.back(), seq.gt_flow);
    double worst = 0, total = 0;
    int64_t count = 0;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 32 - 2; ++y)
            for (int64_t x = 3; x < 32; ++x) {
                const double d =
                    std::abs(double(warped2.at(0, c, y, x)) - seq.frames.front().at(0, c, y, x));
                worst = std::max(worst, d);
                total += d;
                ++count;
            }
    CHECK(worst < 0.08);
    CHECK(total / count < 0.01);
}

TEST_CASE("occluder centroid: affine in t and exact on the rendered coverage") {
    MotionSpec spec;
    spec.height = 48;
    spec.width = 48;
    spec.frame_count = 5;
    spec.with_occluder = true;
    spec.occ_size = 8;
    spec.occ_cy = 20;
    spec.occ_cx = 24;
    spec.occ_vy = 4;
    spec.occ_vx = 0;

    // velocity (4,0) over the interval puts the centroid 2 px down at t=0.5
    const auto [hy, hx] = occ_center(spec, 0.5);
    CHECK(hy == 22.0);
    CHECK(hx == 24.0);

    const auto seq = gen_sequence(spec, 13);
    for (size_t k = 0; k < seq.times.size(); ++k) {
        const double t = seq.times[k];
        const auto [cy, cx] = occ_center(spec, t);
        CHECK(cy == (1 - t) * 20.0 + t * 24.0);  // affine trajectory
        const auto [ry, rx] = alpha_centroid(seq.occ_alpha[k]);
        CHECK(std::abs(ry - cy) < 1e-4);
        CHECK(std::abs(rx - cx) < 1e-4);
    }
}

TEST_CASE("occlusion: flow is rigid on the object, constancy breaks only on the band") {
    MotionSpec spec;
    spec.height = 32;
    spec.width = 32;
    spec.frame_count = 3;
    spec.with_occluder = true;
    spec.occ_size = 8;
    spec.occ_cy = 12;
    spec.occ_cx = 10;
    spec.occ_vy = 0;
    spec.occ_vx = 6;

    const auto seq = gen_sequence(spec, 21);
    const auto& a0 = seq.occ_alpha.front();
    const auto& a1 = seq.occ_alpha.back();
    const auto& I1 = seq.frames.front();
    const auto& I2 = seq.frames.back();
    const int64_t W = 32;

    for (int64_t i = 0; i < 32 * 32; ++i) {
        if (a0.plane(0, 0)[i] == 1.0f) {
            CHECK(seq.gt_flow.plane(0, 0)[i] == 0.0f);
            CHECK(seq.gt_flow.plane(0, 1)[i] == 6.0f);
        } else if (a0.plane(0, 0)[i] == 0.0f) {
            CHECK(seq.gt_flow.plane(0, 0)[i] == 0.0f);
            CHECK(seq.gt_flow.plane(0, 1)[i] == 0.0f);
        }
    }

    // constancy is exact on the object (it moved by an integer step) and in
    // the far field; it breaks exactly where the background gets covered
    const auto warped = flow_warp(I2, seq.gt_flow);
    const auto mask = occlusion_mask(I1, I2, seq.gt_flow);
    int64_t flagged = 0;
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x) {
            const int64_t i = y * W + x;
            const float al0 = a0.plane(0, 0)[i], al1 = a1.plane(0, 0)[i];
            if (al0 == 1.0f || (al0 == 0.0f && al1 == 0.0f)) {
                for (int64_t c = 0; c < 3; ++c)
                    CHECK(warped.at(0, c, y, x) == I1.at(0, c, y, x));
                CHECK(mask.occluded[size_t(i)] == 0);
            }
            if (al0 == 0.0f && al1 == 1.0f) {
                CHECK(mask.occluded[size_t(i)] == 1);
            }
            flagged += mask.occluded[size_t(i)];
        }
    CHECK(flagged > 0);

    // the background plates do not depend on the occluder
    MotionSpec clean = spec;
    clean.with_occluder = false;
    const auto plain = gen_sequence(clean, 21);
    for (size_t k = 0; k < seq.frames.size(); ++k)
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x)
                if (seq.occ_alpha[k].plane(0, 0)[y * W + x] == 0.0f)
                    for (int64_t c = 0; c < 3; ++c)
                        CHECK(seq.frames[k].at(0, c, y, x) == plain.frames[k].at(0, c, y, x));
}

TEST_CASE("spin: mass and centroid stay put, the flow picks up the rotation") {
    MotionSpec spec;
    spec.height = 40;
    spec.width = 40;
    spec.frame_count = 3;
    spec.with_occluder = true;
    spec.occ_size = 12;
    spec.occ_cy = 16;
    spec.occ_cx = 16;
    spec.occ_vy = 2;
    spec.occ_vx = 3;
    spec.occ_spin = 0.5;

    const auto seq = gen_sequence(spec, 3);
    const double m0 = alpha_mass(seq.occ_alpha.front());
    CHECK(m0 == doctest::Approx(12.0 * 12.0).epsilon(0.01));
    for (size_t k = 0; k < seq.times.size(); ++k) {
        CHECK(alpha_mass(seq.occ_alpha[k]) == doctest::Approx(m0).epsilon(0.005));
        const auto [cy, cx] = occ_center(spec, seq.times[k]);
        const auto [ry, rx] = alpha_centroid(seq.occ_alpha[k]);
        CHECK(std::abs(ry - cy) < 0.05);
        CHECK(std::abs(rx - cx) < 0.05);
    }

    // hand-computed rigid flow at an interior pixel, offset (2,1) from center
    const double co = std::cos(0.5), si = std::sin(0.5);
    const int64_t y = 18, x = 17;
    REQUIRE(seq.occ_alpha.front().at(0, 0, y, x) == 1.0f);
    const double fy = 2.0 + (co * 2 - si * 1) - 2;
    const double fx = 3.0 + (si * 2 + co * 1) - 1;
    CHECK(seq.gt_flow.at(0, 0, y, x) == doctest::Approx(fy).epsilon(1e-6));
    CHECK(seq.gt_flow.at(0, 1, y, x) == doctest::Approx(fx).epsilon(1e-6));
}

TEST_CASE("bad specs are refused") {
    MotionSpec spec;
    spec.height = 24;
    spec.width = 24;
    spec.with_occluder = true;
    spec.occ_size = 30;
    CHECK_THROWS_AS(gen_sequence(spec, 1), std::invalid_argument);
    spec.occ_size = 8;
    spec.frame_count = 2;
    CHECK_THROWS_AS(gen_sequence(spec, 1), std::invalid_argument);
    spec.frame_count = 3;
    spec.height = 2;
    CHECK_THROWS_AS(gen_sequence(spec, 1), std::invalid_argument);
}
