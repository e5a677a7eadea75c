#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "edsc/common.hpp"
#include "edsc/io.hpp"
#include "edsc/model.hpp"
#include "test_util.hpp"

using namespace edsc;
using testutil::bitwise_equal;
using testutil::random_tensor;

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.kernel_size = 3;
    c.widths = {8, 16};
    c.est_widths = {8, 8, 8};
    return c;
}

}  // namespace

TEST_CASE("ppm: white pixel produces the exact canonical bytes") {
    const auto path = tmp_path("edsc_io_white.ppm");
    Tensor<double> white({1, 3, 1, 1});
    white.fill(1.0);
    write_ppm(path.string(), white);
    const auto bytes = slurp(path);
    const std::string want = std::string("P6\n1 1\n255\n") + "\xff\xff\xff";
    REQUIRE(bytes.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(bytes[i] == (unsigned char)want[i]);
    std::filesystem::remove(path);
}

TEST_CASE("ppm: quantization rounds halves up, clamps, and interleaves channels") {
    // all chosen values make v*255 + 0.5 exact in binary, so the expected
    // bytes are forced, not approximate
    Tensor<double> img({1, 3, 1, 3});
    img.plane(0, 0)[0] = 0.0;
    img.plane(0, 0)[1] = 0.5;  // 127.5 rounds up to 128
    img.plane(0, 0)[2] = 1.0;
    img.plane(0, 1)[0] = 0.25;
    img.plane(0, 1)[1] = 0.75;
    img.plane(0, 1)[2] = -0.25;  // clamps to 0
    img.plane(0, 2)[0] = 1.25;   // clamps to 255
    img.plane(0, 2)[1] = 0.125;
    img.plane(0, 2)[2] = std::nan("");  // lands on 0

    const auto path = tmp_path("edsc_io_quant.ppm");
    write_ppm(path.string(), img);
    const auto bytes = slurp(path);
    const size_t hdr = std::strlen("P6\n3 1\n255\n");
    REQUIRE(bytes.size() == hdr + 9);
    const unsigned char want[9] = {0, 64, 255, 128, 191, 32, 255, 0, 0};  // rgb per pixel
    for (size_t i = 0; i < 9; ++i) CHECK(bytes[hdr + i] == want[i]);

    const auto back = read_ppm<double>(path.string());
    CHECK(back.at(0, 0, 0, 1) == 128.0 / 255.0);
    CHECK(back.at(0, 1, 0, 1) == 191.0 / 255.0);
    CHECK(back.at(0, 2, 0, 2) == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("ppm: round trip is within half a step, then idempotent") {
    Rng rng(31);
    auto img = random_tensor<double>({1, 3, 6, 7}, rng, 0.0, 1.0);
    const auto path = tmp_path("edsc_io_round.ppm");
    write_ppm(path.string(), img);
    const auto once = read_ppm<double>(path.string());
    double worst = 0;
    for (int64_t i = 0; i < img.numel(); ++i)
        worst = std::max(worst, std::abs(img[i] - once[i]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);

    const auto path2 = tmp_path("edsc_io_round2.ppm");
    write_ppm(path2.string(), once);
    const auto twice = read_ppm<double>(path2.string());
    CHECK(bitwise_equal(once, twice));
    CHECK(slurp(path) == slurp(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("ppm: header comments parse, malformed files are refused") {
    const auto path = tmp_path("edsc_io_hdr.ppm");
    std::string body = "P6 # inline note\n# a full comment line\n 2 1\n255\n";
    body += std::string("\x0a\x14\x1e\x28\x32\x3c", 6);
    spit(path, body);
    const auto img = read_ppm<double>(path.string());
    const Shape4 want{1, 3, 1, 2};
    CHECK(img.shape() == want);
    CHECK(img.at(0, 0, 0, 0) == 10.0 / 255.0);
    CHECK(img.at(0, 2, 0, 1) == 60.0 / 255.0);

    CHECK_THROWS_AS(read_ppm<double>(tmp_path("edsc_io_missing.ppm").string()), DataError);

    spit(path, "P5\n1 1\n255\n" + std::string(3, 'x'));
    CHECK_THROWS_AS(read_ppm<double>(path.string()), DataError);

    spit(path, "P6\n1 1\n65535\n" + std::string(6, 'x'));
    CHECK_THROWS_AS(read_ppm<double>(path.string()), DataError);

    spit(path, "P6\n2 2\n255\n" + std::string(11, 'x'));  // one byte short
    CHECK_THROWS_AS(read_ppm<double>(path.string()), DataError);

    spit(path, "P6\nab cd\n255\n");
    CHECK_THROWS_AS(read_ppm<double>(path.string()), DataError);
    std::filesystem::remove(path);

    Tensor<double> gray({1, 1, 2, 2});
    CHECK_THROWS_AS(write_ppm(tmp_path("edsc_io_gray.ppm").string(), gray),
                    std::invalid_argument);
}

TEST_CASE("checkpoint: file layout is pinned and the round trip is bitwise") {
    auto m = build_model<float>(tiny_config(), 99);
    const Checkpoint ck = make_checkpoint(m);
    const auto path = tmp_path("edsc_io_ck.bin");
    save_checkpoint(path.string(), ck);

    const auto bytes = slurp(path);
    size_t pos = 0;
    auto rd32 = [&](const char* what) {
        REQUIRE_MESSAGE(pos + 4 <= bytes.size(), what);
        uint32_t v = 0;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    };
    REQUIRE(bytes.size() > 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EDSC");
    pos = 4;
    CHECK(rd32("version") == kCheckpointVersion);
    const uint32_t nlines = rd32("line count");
    REQUIRE(nlines == ck.config.size());
    for (uint32_t i = 0; i < nlines; ++i) {
        const uint32_t len = rd32("line length");
        REQUIRE(pos + len <= bytes.size());
        const std::string line(bytes.begin() + pos, bytes.begin() + pos + len);
        pos += len;
        CHECK(line == ck.config[i].first + "=" + ck.config[i].second);
    }
    const uint32_t ntensors = rd32("tensor count");
    REQUIRE(ntensors == m.params.size());
    std::vector<std::string> names;
    for (uint32_t i = 0; i < ntensors; ++i) {
        const uint32_t nlen = rd32("name length");
        REQUIRE(pos + nlen <= bytes.size());
        names.emplace_back(bytes.begin() + pos, bytes.begin() + pos + nlen);
        pos += nlen;
        CHECK(bytes.at(pos) == 0);      // f32 tag
        CHECK(bytes.at(pos + 1) == 4);  // rank
        pos += 2;
        int64_t numel = 1;
        for (int d = 0; d < 4; ++d) numel *= rd32("dim");
        REQUIRE(pos + size_t(numel) * 4 <= bytes.size());
        pos += size_t(numel) * 4;
    }
    CHECK(pos == bytes.size());
    CHECK(std::is_sorted(names.begin(), names.end()));
    size_t i = 0;
    for (const auto& [name, t] : m.params) CHECK(names.at(i++) == name);

    const Checkpoint back = load_checkpoint(path.string());
    CHECK(back.version == ck.version);
    CHECK(back.config == ck.config);
    REQUIRE(back.f32.size() == ck.f32.size());
    CHECK(back.f64.empty());
    for (const auto& [name, t] : ck.f32) {
        REQUIRE(back.f32.count(name) == 1);
        CHECK(bitwise_equal(t, back.f32.at(name)));
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: double precision tensors round trip bitwise") {
    auto m = build_model<double>(tiny_config(), 7);
    const auto path = tmp_path("edsc_io_ck64.bin");
    save_checkpoint(path.string(), make_checkpoint(m));
    const Checkpoint back = load_checkpoint(path.string());
    CHECK(back.f32.empty());
    REQUIRE(back.f64.size() == m.params.size());
    for (const auto& [name, t] : m.params) CHECK(bitwise_equal(t, back.f64.at(name)));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: corruption is reported, truncation names the tensor") {
    auto m = build_model<float>(tiny_config(), 3);
    const auto path = tmp_path("edsc_io_ck_bad.bin");
    save_checkpoint(path.string(), make_checkpoint(m));
    auto bytes = slurp(path);

    auto rewrite = [&](const std::vector<unsigned char>& b) {
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    };

    auto flipped = bytes;
    flipped[0] = 'X';
    rewrite(flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("magic"), DataError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 5);
    rewrite(truncated);
    const std::string last_name = m.params.rbegin()->first;
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains(last_name.c_str()),
                         DataError);

    auto padded = bytes;
    padded.push_back(0);
    rewrite(padded);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("trailing"), DataError);

    Checkpoint odd;
    odd.version = 7;
    save_checkpoint(path.string(), odd);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("version"), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: a reloaded model reproduces its outputs bitwise") {
    auto m = build_model<float>(tiny_config(), 512);
    Rng rng(64);
    auto I1 = random_tensor<float>({1, 3, 8, 8}, rng, 0.0, 1.0);
    auto I2 = random_tensor<float>({1, 3, 8, 8}, rng, 0.0, 1.0);
    const auto before = interpolate(m, I1, I2);

    const auto path = tmp_path("edsc_io_ck_model.bin");
    save_checkpoint(path.string(), make_checkpoint(m));
    auto loaded = model_from_checkpoint<float>(load_checkpoint(path.string()));
    CHECK(bitwise_equal(before, interpolate(loaded, I1, I2)));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: mismatched config, dtype, or stray tensors are refused") {
    auto m = build_model<float>(tiny_config(), 1);
    const Checkpoint ck = make_checkpoint(m);

    ModelConfig other_cfg = tiny_config();
    other_cfg.widths = {8, 8};
    auto other = build_model<float>(other_cfg, 1);
    CHECK_THROWS_WITH_AS(load_into_model(other, ck), doctest::Contains("model.widths"), DataError);

    CHECK_THROWS_AS(model_from_checkpoint<double>(ck), DataError);

    Checkpoint stray = ck;
    stray.f64.emplace("stray", Tensor<double>({1, 1, 1, 1}));
    auto fresh = build_model<float>(tiny_config(), 2);
    CHECK_THROWS_WITH_AS(load_into_model(fresh, stray), doctest::Contains("stray"), DataError);
}

TEST_CASE("config text: parsing, comments, layering, and strict model keys") {
    const auto kv = parse_kv_text("a=1\n# note\n b = 2,3 \n\nb=4 # override\nk=a=b\n");
    REQUIRE(kv.size() == 4);
    CHECK(kv[0].first == "a");
    CHECK(kv[1].second == "2,3");
    CHECK(*kv_find(kv, "b") == "4");
    CHECK(*kv_find(kv, "k") == "a=b");
    CHECK(kv_find(kv, "missing") == nullptr);
    CHECK_THROWS_AS(parse_kv_text("no separator here"), DataError);
    CHECK_THROWS_AS(parse_kv_text("=value"), DataError);

    ModelConfig c = full_scale_config();
    c.multi_time = true;
    c.use_mask = false;
    const ModelConfig d = model_config_from_kv(model_config_to_kv(c));
    CHECK(d.kernel_size == c.kernel_size);
    CHECK(d.hetconv_p == c.hetconv_p);
    CHECK(d.widths == c.widths);
    CHECK(d.est_widths == c.est_widths);
    CHECK(d.multi_time == c.multi_time);
    CHECK(d.use_mask == c.use_mask);
    CHECK(d.use_bias == c.use_bias);

    KvPairs layered = model_config_to_kv(c);
    layered.emplace_back("train.lr", "0.1");  // foreign namespace passes through
    CHECK(model_config_from_kv(layered).hetconv_p == c.hetconv_p);
    layered.emplace_back("model.depth", "9");
    CHECK_THROWS_AS(model_config_from_kv(layered), DataError);

    const KvPairs bad_int = {{"model.kernel_size", "five"}};
    CHECK_THROWS_AS(model_config_from_kv(bad_int), DataError);
    const KvPairs bad_list = {{"model.widths", ""}};
    CHECK_THROWS_AS(model_config_from_kv(bad_list), DataError);
    const KvPairs bad_bool = {{"model.multi_time", "maybe"}};
    CHECK_THROWS_AS(model_config_from_kv(bad_bool), DataError);
}
