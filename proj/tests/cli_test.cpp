#include <doctest.h>

#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "edsc/io.hpp"
#include "edsc/tensor.hpp"

// Drives the installed binary end to end through a shell; EDSC_CLI is the
// target path baked in by the build.

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int rc = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(EDSC_CLI) + " " + args + " 2>&1";
    CliResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf;
    while (size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int st = pclose(p);
    r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() /
              ("edsc_cli_" + std::to_string(::getpid()) + "_" +
               std::to_string(reinterpret_cast<uintptr_t>(this) & 0xffff));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

// one tiny dataset + checkpoint shared across the cases below
const Scratch& workspace() {
    static Scratch s;
    static bool ready = false;
    if (!ready) {
        CliResult g = run_cli("gen-data --out " + s.p("data") + " --size 16 --count 2 --seed 7");
        REQUIRE(g.rc == 0);
        CliResult t = run_cli("train --data " + s.p("data") + " --out " + s.p("run") +
                              " --epochs 1 --widths 8,16 --kernel 3 --threads 1");
        REQUIRE(t.rc == 0);
        ready = true;
    }
    return s;
}

}  // namespace

TEST_CASE("gen-data writes frames, flow, manifest, resolved config") {
    const Scratch& s = workspace();
    CHECK(fs::exists(s.p("data/seq000/frame_0.ppm")));
    CHECK(fs::exists(s.p("data/seq000/frame_6.ppm")));
    CHECK(fs::exists(s.p("data/seq001/flow_0_to_6.flo1")));
    const std::string manifest = slurp(s.p("data/manifest.txt"));
    CHECK(manifest.find("target_times=0.167, 0.333, 0.5, 0.667, 0.833") != std::string::npos);
    const std::string cfg = slurp(s.p("data/config.txt"));
    CHECK(cfg.find("seed=7") != std::string::npos);
    CHECK(cfg.find("data.size=16") != std::string::npos);
}

TEST_CASE("gen-data refuses a non-empty directory unless forced") {
    const Scratch& s = workspace();
    CliResult again = run_cli("gen-data --out " + s.p("data") + " --size 16 --count 2 --seed 7");
    CHECK(again.rc == 1);
    CHECK(again.out.find("--force") != std::string::npos);
    CliResult forced = run_cli("gen-data --out " + s.p("data") +
                               " --size 16 --count 1 --seed 8 --force");
    CHECK(forced.rc == 0);
    CHECK(fs::exists(s.p("data/seq000")));
    CHECK(!fs::exists(s.p("data/seq001")));
    // restore the two-sequence dataset other cases expect
    CliResult back = run_cli("gen-data --out " + s.p("data") +
                             " --size 16 --count 2 --seed 7 --force");
    REQUIRE(back.rc == 0);
}

TEST_CASE("train writes log, resolved config, checkpoint; flags beat config file") {
    const Scratch& s = workspace();
    CHECK(fs::exists(s.p("run/model.ckpt")));
    const std::string log = slurp(s.p("run/log.txt"));
    CHECK(log.find("1, ") != std::string::npos);

    std::ofstream(s.p("mix.cfg")) << "train.lr=0.5\nmodel.kernel_size=3\nmodel.widths=8,16\n";
    CliResult t = run_cli("train --data " + s.p("data") + " --out " + s.p("run2") +
                          " --config " + s.p("mix.cfg") + " --lr 0.001 --epochs 1 --threads 1");
    REQUIRE(t.rc == 0);
    const std::string cfg = slurp(s.p("run2/config.txt"));
    CHECK(cfg.find("train.lr=0.001") != std::string::npos);
    CHECK(cfg.find("model.kernel_size=3") != std::string::npos);
}

TEST_CASE("unknown config key and missing dataset map to usage and data exits") {
    const Scratch& s = workspace();
    std::ofstream(s.p("bad.cfg")) << "no.such.key=1\n";
    CliResult u = run_cli("train --data " + s.p("data") + " --out " + s.p("x") + " --config " +
                          s.p("bad.cfg"));
    CHECK(u.rc == 1);
    CliResult d = run_cli("train --data " + s.p("missing") + " --out " + s.p("x"));
    CHECK(d.rc == 2);
    CHECK(d.out.find("dataset directory not found") != std::string::npos);
}

TEST_CASE("failed gradient tolerance exits with the numeric code") {
    CliResult r = run_cli("gradcheck --seeds 1 --tol 1e-30");
    CHECK(r.rc == 3);
    CHECK(r.out.find("FAIL") != std::string::npos);
}

TEST_CASE("interp writes one frame per time and enforces the single-time contract") {
    const Scratch& s = workspace();
    const std::string io = " --ckpt " + s.p("run/model.ckpt") + " --frame1 " +
                           s.p("data/seq000/frame_0.ppm") + " --frame2 " +
                           s.p("data/seq000/frame_6.ppm");
    CliResult bad = run_cli("interp" + io + " --time 0.25 --out " + s.p("bad.ppm"));
    CHECK(bad.rc == 1);
    CHECK(bad.out.find("single-time") != std::string::npos);

    CliResult multi = run_cli("interp" + io + " --times 0.25,0.75 --naive-rescale --out " +
                              s.p("sweep"));
    REQUIRE(multi.rc == 0);
    CHECK(fs::exists(s.p("sweep/t0.250.ppm")));
    CHECK(fs::exists(s.p("sweep/t0.750.ppm")));
    CHECK(fs::exists(s.p("sweep/config.txt")));

    CliResult mid = run_cli("interp" + io + " --t 0.5 --out " + s.p("mid.ppm"));
    REQUIRE(mid.rc == 0);
    CHECK(fs::exists(s.p("mid.ppm")));
    CHECK(fs::exists(s.p("mid.config.txt")));
}

TEST_CASE("eval prints the stable metric line, with ie_o only when flow is given") {
    const Scratch& s = workspace();
    REQUIRE(fs::exists(s.p("mid.ppm")));
    const std::string pair = "eval --pred " + s.p("mid.ppm") + " --gt " +
                             s.p("data/seq000/frame_3.ppm");
    CliResult plain = run_cli(pair);
    REQUIRE(plain.rc == 0);
    CHECK(plain.out.find("psnr=") != std::string::npos);
    CHECK(plain.out.find("ssim=") != std::string::npos);
    CHECK(plain.out.find("ie=") != std::string::npos);
    CHECK(plain.out.find("ie_b=") != std::string::npos);
    CHECK(plain.out.find("ie_o=") == std::string::npos);

    CliResult flow = run_cli(pair + " --frame1 " + s.p("data/seq000/frame_0.ppm") +
                             " --frame2 " + s.p("data/seq000/frame_6.ppm") + " --flow " +
                             s.p("data/seq000/flow_0_to_6.flo1"));
    REQUIRE(flow.rc == 0);
    CHECK(flow.out.find("ie_o=") != std::string::npos);
}

TEST_CASE("deterministic interp re-runs are bit-identical") {
    const Scratch& s = workspace();
    const std::string io = " --ckpt " + s.p("run/model.ckpt") + " --frame1 " +
                           s.p("data/seq000/frame_0.ppm") + " --frame2 " +
                           s.p("data/seq000/frame_6.ppm") + " --t 0.5 --out ";
    REQUIRE(run_cli("--deterministic interp" + io + s.p("d1.ppm")).rc == 0);
    REQUIRE(run_cli("--deterministic interp" + io + s.p("d2.ppm")).rc == 0);
    CHECK(slurp(s.p("d1.ppm")) == slurp(s.p("d2.ppm")));
}

TEST_CASE("count reports totals and the mixed-conv body ratio") {
    CliResult r = run_cli("count --res 64");
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("total_params=") != std::string::npos);
    CHECK(r.out.find("total_flops=") != std::string::npos);
    CHECK(r.out.find("body_mac_ratio=0.33") != std::string::npos);
}

TEST_CASE("viz-kernels writes both sampling maps and the synthesized frame") {
    const Scratch& s = workspace();
    CliResult r = run_cli("viz-kernels --ckpt " + s.p("run/model.ckpt") + " --frame1 " +
                          s.p("data/seq000/frame_0.ppm") + " --frame2 " +
                          s.p("data/seq000/frame_6.ppm") + " --pixel 8,8 --out " + s.p("viz"));
    REQUIRE(r.rc == 0);
    CHECK(fs::exists(s.p("viz/map1.ppm")));
    CHECK(fs::exists(s.p("viz/map2.ppm")));
    CHECK(fs::exists(s.p("viz/synth.ppm")));
    const edsc::Tensor<float> map1 = edsc::read_ppm<float>(s.p("viz/map1.ppm"));
    CHECK(map1.shape().h == 16);
    CliResult oob = run_cli("viz-kernels --ckpt " + s.p("run/model.ckpt") + " --frame1 " +
                            s.p("data/seq000/frame_0.ppm") + " --frame2 " +
                            s.p("data/seq000/frame_6.ppm") + " --pixel 99,8 --out " + s.p("v2"));
    CHECK(oob.rc == 1);
}
