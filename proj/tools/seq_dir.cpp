#include "seq_dir.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "edsc/common.hpp"
#include "edsc/io.hpp"
#include "edsc/sampling.hpp"

namespace fs = std::filesystem;

namespace edsc::tools {

std::string seq_dir_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "seq%03d", index);
    return std::string(buf);
}

static std::string frame_path(const std::string& dir, size_t k) {
    return dir + "/frame_" + std::to_string(k) + ".ppm";
}

static std::string flow_path(const std::string& dir, size_t frames) {
    return dir + "/flow_0_to_" + std::to_string(frames - 1) + ".flo1";
}

void write_sequence_dir(const std::string& dir, const SyntheticSequence& s) {
    fs::create_directories(dir);
    for (size_t k = 0; k < s.frames.size(); ++k) write_ppm(frame_path(dir, k), s.frames[k]);
    if (s.gt_flow.numel() > 0) write_flo1(flow_path(dir, s.frames.size()), s.gt_flow);
}

SyntheticSequence load_sequence_dir(const std::string& dir) {
    SyntheticSequence s;
    for (size_t k = 0;; ++k) {
        const std::string p = frame_path(dir, k);
        if (!fs::exists(p)) break;
        s.frames.push_back(read_ppm<float>(p));
        if (!(s.frames.back().shape() == s.frames.front().shape()))
            throw DataError("frame sizes differ inside " + dir);
    }
    if (s.frames.size() < 3)
        throw DataError("sequence directory " + dir + " holds " +
                        std::to_string(s.frames.size()) + " frames, need at least 3");
    s.times = sequence_times(static_cast<int>(s.frames.size()));
    const std::string fp = flow_path(dir, s.frames.size());
    if (fs::exists(fp)) s.gt_flow = read_flo1(fp);
    return s;
}

std::vector<std::string> list_sequence_dirs(const std::string& data_dir) {
    if (!fs::is_directory(data_dir))
        throw DataError("dataset directory not found: " + data_dir);
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(data_dir)) {
        if (!e.is_directory()) continue;
        const std::string name = e.path().filename().string();
        if (name.size() == 6 && name.compare(0, 3, "seq") == 0 &&
            std::all_of(name.begin() + 3, name.end(), [](char c) { return c >= '0' && c <= '9'; }))
            dirs.push_back(e.path().string());
    }
    if (dirs.empty()) throw DataError("no seqNNN directories under " + data_dir);
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

}  // namespace edsc::tools
