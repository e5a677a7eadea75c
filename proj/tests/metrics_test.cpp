#include <doctest.h>

#include <cmath>
#include <vector>

#include "edsc/common.hpp"
#include "edsc/metrics.hpp"
#include "test_util.hpp"

using namespace edsc;
using testutil::random_tensor;

TEST_CASE("psnr known values and monotonicity") {
    Rng rng(7);
    auto img = random_tensor<double>({1, 3, 16, 16}, rng, 0.0, 1.0);
    CHECK(psnr(img, img) == 99.0);

    auto shifted = img;
    for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.1;
    CHECK(psnr(shifted, img) == doctest::Approx(20.0).epsilon(1e-9));

    // MSE of 1 against a 255 peak.
    Tensor<double> a({1, 1, 4, 4}), b({1, 1, 4, 4});
    b.fill(1.0);
    CHECK(psnr(a, b, 255.0) == doctest::Approx(48.130803609).epsilon(1e-9));

    double prev = 1e9;
    for (double amp : {0.01, 0.02, 0.05, 0.1, 0.3}) {
        auto noisy = img;
        for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += amp;
        const double p = psnr(noisy, img);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity, constant shift, and range") {
    Rng rng(11);
    auto img = random_tensor<double>({1, 3, 13, 17}, rng, 0.0, 1.0);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));

    // Constant images: variance terms vanish, luminance term survives.
    Tensor<double> x({1, 1, 12, 12}), y({1, 1, 12, 12});
    x.fill(0.5);
    y.fill(0.6);
    const double c1 = 1e-4;
    const double want = (2 * 0.5 * 0.6 + c1) / (0.5 * 0.5 + 0.6 * 0.6 + c1);
    CHECK(ssim(x, y) == doctest::Approx(want).epsilon(1e-12));

    auto noisy = random_tensor<double>({1, 3, 13, 17}, rng, 0.0, 1.0);
    const double v = ssim(img, noisy);
    CHECK(v >= -1.0);
    CHECK(v < 1.0);

    Tensor<double> tiny({1, 1, 8, 8});
    CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim against a direct windowed-formula oracle") {
    Rng rng(13);
    auto a = random_tensor<double>({1, 2, 14, 15}, rng, 0.0, 1.0);
    auto b = random_tensor<double>({1, 2, 14, 15}, rng, 0.0, 1.0);

    // Independent evaluation: build the window, slide it, apply the formula.
    std::vector<double> win(121);
    double wsum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            win[i * 11 + j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
            wsum += win[i * 11 + j];
        }
    for (double& w : win) w /= wsum;
    const double C1 = 1e-4, C2 = 9e-4;
    double total = 0;
    int64_t count = 0;
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t oy = 0; oy + 11 <= 14; ++oy)
            for (int64_t ox = 0; ox + 11 <= 15; ++ox) {
                double mx = 0, my = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        mx += win[i * 11 + j] * a.at(0, c, oy + i, ox + j);
                        my += win[i * 11 + j] * b.at(0, c, oy + i, ox + j);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double dx = a.at(0, c, oy + i, ox + j) - mx;
                        const double dy = b.at(0, c, oy + i, ox + j) - my;
                        vx += win[i * 11 + j] * dx * dx;
                        vy += win[i * 11 + j] * dy * dy;
                        cov += win[i * 11 + j] * dx * dy;
                    }
                total += ((2 * mx * my + C1) * (2 * cov + C2)) /
                         ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++count;
            }
    CHECK(ssim(a, b) == doctest::Approx(total / double(count)).epsilon(1e-9));

    // Anti-correlated zero-mean patterns push SSIM negative.
    Tensor<double> s({1, 1, 11, 11}), t({1, 1, 11, 11});
    for (int64_t i = 0; i < 121; ++i) {
        const double v = (i % 2 ? 0.3 : -0.3);
        s[i] = v;
        t[i] = -v;
    }
    CHECK(ssim(s, t) < 0.0);
}

TEST_CASE("interpolation error") {
    Rng rng(17);
    auto img = random_tensor<double>({1, 3, 9, 9}, rng, 0.0, 1.0);
    CHECK(interpolation_error(img, img) == 0.0);

    auto off = img;
    for (int64_t i = 0; i < off.numel(); ++i) off[i] += 2.0 / 255.0;
    CHECK(interpolation_error(off, img) == doctest::Approx(2.0).epsilon(1e-12));

    auto other = random_tensor<double>({1, 3, 9, 9}, rng, 0.0, 1.0);
    double acc = 0;
    for (int64_t i = 0; i < img.numel(); ++i) {
        const double d = other[i] - img[i];
        acc += d * d;
    }
    CHECK(interpolation_error(other, img) ==
          doctest::Approx(255.0 * std::sqrt(acc / double(img.numel()))).epsilon(1e-12));
}

TEST_CASE("occlusion mask finds the covered band") {
    // Static textured background; a flat bright square shifts 4 columns right
    // between the frames. Background pixels that frame 2's square covers are
    // the ones brightness constancy cannot explain.
    const int64_t H = 24, W = 24;
    Rng rng(19);
    Tensor<double> I1({1, 3, H, W}), I2({1, 3, H, W});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < H * W; ++i) {
            const double v = rng.uniform(0.0, 0.35);
            I1.plane(0, c)[i] = v;
            I2.plane(0, c)[i] = v;
        }
    const int64_t r0 = 8, r1 = 16, c0 = 8, c1 = 16, shift = 4;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = r0; y < r1; ++y) {
            for (int64_t x = c0; x < c1; ++x) I1.at(0, c, y, x) = 0.95;
            for (int64_t x = c0 + shift; x < c1 + shift; ++x) I2.at(0, c, y, x) = 0.95;
        }
    Tensor<double> flow({1, 2, H, W});
    for (int64_t y = r0; y < r1; ++y)
        for (int64_t x = c0; x < c1; ++x) flow.at(0, 1, y, x) = double(shift);

    auto m = occlusion_mask(I1, I2, flow);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const bool in_band = y >= r0 && y < r1 && x >= c1 && x < c1 + shift;
            CHECK(int(m.occluded[y * W + x]) == int(in_band));
        }
    CHECK(m.count() == (r1 - r0) * shift);
}

TEST_CASE("constant frames with zero flow mark everything occluded") {
    Tensor<double> I({1, 3, 8, 8}, 0.4), flow({1, 2, 8, 8});
    auto m = occlusion_mask(I, I, flow);
    CHECK(m.count() == 64);
}

TEST_CASE("masked error exactness and recombination") {
    Rng rng(23);
    auto pred = random_tensor<double>({1, 3, 10, 12}, rng, 0.0, 1.0);
    auto gt = random_tensor<double>({1, 3, 10, 12}, rng, 0.0, 1.0);

    std::vector<uint8_t> mask(120), rest(120);
    int64_t n1 = 0;
    for (int64_t i = 0; i < 120; ++i) {
        mask[i] = rng.uniform() < 0.3 ? 1 : 0;
        rest[i] = 1 - mask[i];
        n1 += mask[i];
    }
    const int64_t n2 = 120 - n1;
    REQUIRE(n1 > 0);
    REQUIRE(n2 > 0);

    const double a = ie_masked(pred, gt, mask);
    const double b = ie_masked(pred, gt, rest);
    const double whole = interpolation_error(pred, gt);
    CHECK(double(n1) * a * a + double(n2) * b * b ==
          doctest::Approx(120.0 * whole * whole).epsilon(1e-9));

    CHECK(ie_masked(gt, gt, mask) == 0.0);
    std::vector<uint8_t> none(120, 0);
    CHECK_THROWS_AS(ie_masked(pred, gt, none), DataError);
}

TEST_CASE("boundary error") {
    Rng rng(29);
    auto gt = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    CHECK(ie_boundary(gt, gt) == 0.0);

    // Interior-only error stays invisible to the band.
    auto pred = gt;
    pred.at(0, 0, 15, 15) += 0.5;
    pred.at(0, 1, 12, 20) -= 0.3;
    CHECK(ie_boundary(pred, gt) == 0.0);
    CHECK(interpolation_error(pred, gt) > 0.0);

    // Against a direct mask-and-rmse evaluation.
    auto other = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    double acc = 0;
    int64_t n = 0;
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x) {
            if (!(y < 10 || y >= 22 || x < 10 || x >= 22)) continue;
            ++n;
            for (int64_t c = 0; c < 3; ++c) {
                const double d = other.at(0, c, y, x) - gt.at(0, c, y, x);
                acc += d * d;
            }
        }
    CHECK(ie_boundary(other, gt) ==
          doctest::Approx(255.0 * std::sqrt(acc / double(n * 3))).epsilon(1e-12));

    // A band at least half the image wide covers everything and reproduces
    // the global error exactly (identical accumulation order).
    CHECK(ie_boundary(other, gt, 16) == interpolation_error(other, gt));
    CHECK_THROWS_AS(ie_boundary(other, gt, 0), std::invalid_argument);
}
