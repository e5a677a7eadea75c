#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "edsc/common.hpp"
#include "edsc/sampling.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace edsc;
using testutil::bitwise_equal;
using testutil::max_abs_diff;
using testutil::naive_bilinear;
using testutil::random_tensor;

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("bilinear sample: frozen value and integer exactness") {
    Tensor<double> img({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    // (y,x) = (0.5, 0.25): rows blend 50/50, columns 75/25.
    CHECK(bilinear_sample(img, 0, 0, 0.5, 0.25) == doctest::Approx(1.25).epsilon(1e-15));
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 2; ++x)
            CHECK(bilinear_sample(img, 0, 0, double(y), double(x)) == img.at(0, 0, y, x));
}

TEST_CASE("bilinear sample: replicate border") {
    Rng rng(11);
    auto img = random_tensor<double>({1, 2, 5, 7}, rng);
    CHECK(bilinear_sample(img, 0, 0, -9.3, -4.2) == img.at(0, 0, 0, 0));
    CHECK(bilinear_sample(img, 0, 1, 50.0, 100.5) == img.at(0, 1, 4, 6));
    CHECK(bilinear_sample(img, 0, 0, -2.0, 3.5) ==
          doctest::Approx(0.5 * img.at(0, 0, 0, 3) + 0.5 * img.at(0, 0, 0, 4)).epsilon(1e-15));

    Tensor<double> flat({1, 1, 4, 4});
    flat.fill(0.731);
    for (double y : {-3.7, 0.2, 1.5, 3.0, 8.9})
        for (double x : {-1.1, 0.0, 2.8, 5.5})
            CHECK(bilinear_sample(flat, 0, 0, y, x) == doctest::Approx(0.731).epsilon(1e-15));
}

TEST_CASE("bilinear sample matches coordinate-clamping reference") {
    Rng rng(23);
    auto img = random_tensor<double>({2, 3, 6, 5}, rng);
    for (int i = 0; i < 300; ++i) {
        const int64_t b = rng.uniform_int(0, 1), c = rng.uniform_int(0, 2);
        const double y = rng.uniform(-4.0, 10.0), x = rng.uniform(-4.0, 9.0);
        CHECK(bilinear_sample(img, b, c, y, x) ==
              doctest::Approx(naive_bilinear(img, b, c, y, x)).epsilon(1e-12));
    }
}

TEST_CASE("flow warp: channel convention is (dy, dx)") {
    Tensor<double> img({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    Tensor<double> flow({1, 2, 2, 2});
    flow.plane(0, 0)[0] = 0.5;   // dy at (0,0)
    flow.plane(0, 1)[0] = 0.25;  // dx at (0,0)
    auto out = flow_warp(img, flow);
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("flow as per-pixel 2x2 stencil equals warping") {
    Rng rng(37);
    for (int seed = 0; seed < 5; ++seed) {
        Rng r = rng.fork(seed);
        auto img = random_tensor<double>({2, 3, 7, 6}, r);
        // Flows big enough to leave the image, with fractional parts.
        auto flow = random_tensor<double>({2, 2, 7, 6}, r, -9.0, 9.0);
        auto a = flow_warp(img, flow);
        auto b = flow_as_conv(img, flow);
        CHECK(max_abs_diff(a, b) <= 1e-12);
    }
}

TEST_CASE("integer flow degenerates to a shifted copy") {
    Rng rng(41);
    auto img = random_tensor<double>({1, 2, 5, 6}, rng);
    Tensor<double> flow({1, 2, 5, 6});
    for (int64_t i = 0; i < 30; ++i) {
        flow.plane(0, 0)[i] = double(rng.uniform_int(-6, 6));
        flow.plane(0, 1)[i] = double(rng.uniform_int(-7, 7));
    }
    auto out = flow_as_conv(img, flow);
    auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t x = 0; x < 6; ++x) {
                const int64_t sy = clampi(y + int64_t(flow.at(0, 0, y, x)), 4);
                const int64_t sx = clampi(x + int64_t(flow.at(0, 1, y, x)), 5);
                CHECK(out.at(0, c, y, x) == img.at(0, c, sy, sx));
            }
}

TEST_CASE("flow file round-trip is bitwise") {
    Rng rng(53);
    auto flow = random_tensor<float>({1, 2, 9, 13}, rng, -40.0, 40.0);
    flow[5] = -0.0f;  // sign of zero must survive
    const auto path = tmp_path("edsc_sampling_roundtrip.flo1");
    write_flo1(path.string(), flow);
    auto back = read_flo1(path.string());
    CHECK(bitwise_equal(flow, back));
    std::filesystem::remove(path);
}

TEST_CASE("flow file errors") {
    CHECK_THROWS_AS(read_flo1("/nonexistent/nowhere.flo1"), DataError);

    const auto bad_magic = tmp_path("edsc_sampling_badmagic.flo1");
    {
        std::ofstream f(bad_magic, std::ios::binary);
        f.write("PIEH\x03\x00\x00\x00\x03\x00\x00\x00", 12);
    }
    CHECK_THROWS_AS(read_flo1(bad_magic.string()), DataError);
    std::filesystem::remove(bad_magic);

    const auto truncated = tmp_path("edsc_sampling_trunc.flo1");
    {
        std::ofstream f(truncated, std::ios::binary);
        const uint32_t h = 4, w = 4;
        f.write("FLO1", 4);
        f.write(reinterpret_cast<const char*>(&h), 4);
        f.write(reinterpret_cast<const char*>(&w), 4);
        const float payload[3] = {1.f, 2.f, 3.f};  // far short of 4*4*2 floats
        f.write(reinterpret_cast<const char*>(payload), sizeof payload);
    }
    CHECK_THROWS_AS(read_flo1(truncated.string()), DataError);
    std::filesystem::remove(truncated);

    Tensor<float> wrong({1, 3, 4, 4});
    CHECK_THROWS_AS(write_flo1(tmp_path("edsc_sampling_wrong.flo1").string(), wrong),
                    std::invalid_argument);
}
