#include "edsc/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "edsc/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and image I/O assume a little-endian host");

namespace edsc {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    size_t pos = 0;
    int n = 0;
    try {
        n = std::stoi(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size() || v.empty())
        throw DataError("bad integer for " + key + ": '" + raw + "'");
    return n;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_int(key, item));
    if (out.empty()) throw DataError("empty list for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw DataError("bad boolean for " + key + ": '" + v + "'");
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

KvPairs parse_kv_text(const std::string& text) {
    KvPairs out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + " has no '=': " + line);
        std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw DataError("config line " + std::to_string(lineno) + " has an empty key");
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

const std::string* kv_find(const KvPairs& kv, const std::string& key) {
    const std::string* hit = nullptr;
    for (const auto& [k, v] : kv)
        if (k == key) hit = &v;
    return hit;
}

KvPairs model_config_to_kv(const ModelConfig& c) {
    return {
        {"model.kernel_size", std::to_string(c.kernel_size)},
        {"model.hetconv_p", std::to_string(c.hetconv_p)},
        {"model.widths", join_ints(c.widths)},
        {"model.est_widths", join_ints(c.est_widths)},
        {"model.multi_time", c.multi_time ? "1" : "0"},
        {"model.use_mask", c.use_mask ? "1" : "0"},
        {"model.use_bias", c.use_bias ? "1" : "0"},
    };
}

ModelConfig model_config_from_kv(const KvPairs& kv) {
    ModelConfig c;
    for (const auto& [k, v] : kv) {
        if (k.rfind("model.", 0) != 0) continue;
        if (k == "model.kernel_size")
            c.kernel_size = parse_int(k, v);
        else if (k == "model.hetconv_p")
            c.hetconv_p = parse_int(k, v);
        else if (k == "model.widths")
            c.widths = parse_int_list(k, v);
        else if (k == "model.est_widths")
            c.est_widths = parse_int_list(k, v);
        else if (k == "model.multi_time")
            c.multi_time = parse_bool(k, v);
        else if (k == "model.use_mask")
            c.use_mask = parse_bool(k, v);
        else if (k == "model.use_bias")
            c.use_bias = parse_bool(k, v);
        else
            throw DataError("unknown model config key: " + k);
    }
    return c;
}

namespace {

// Reads one unsigned decimal from a PNM header, skipping whitespace and
// '#'-to-end-of-line comments before it. Leaves the stream on the byte after
// the last digit so the separator after maxval stays consumable.
int64_t ppm_header_int(std::istream& in, const std::string& path, const char* what) {
    int ch = in.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#')
            while (ch != EOF && ch != '\n') ch = in.get();
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch))
        throw DataError(std::string("bad PPM header (") + what + ") in " + path);
    int64_t v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > (int64_t(1) << 30))
            throw DataError(std::string("absurd PPM header value (") + what + ") in " + path);
        ch = in.get();
    }
    if (ch != EOF) in.unget();
    return v;
}

}  // namespace

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || m1 != '6')
        throw DataError("not a binary PPM (P6): " + path);
    const int64_t W = ppm_header_int(in, path, "width");
    const int64_t H = ppm_header_int(in, path, "height");
    const int64_t maxval = ppm_header_int(in, path, "maxval");
    if (W <= 0 || H <= 0 || W * H > (int64_t(1) << 26))
        throw DataError("bad PPM dimensions in " + path);
    if (maxval != 255)
        throw DataError("unsupported PPM maxval " + std::to_string(maxval) + " in " + path);
    in.get();  // the single whitespace byte between header and pixels
    std::vector<unsigned char> raw(size_t(W) * H * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw DataError("truncated PPM pixel data in " + path);
    Tensor<T> img({1, 3, H, W});
    for (int64_t c = 0; c < 3; ++c) {
        T* p = img.plane(0, c);
        for (int64_t i = 0; i < H * W; ++i) p[i] = T(raw[i * 3 + c]) / T(255);
    }
    return img;
}

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& img) {
    const Shape4 s = img.shape();
    if (s.b != 1 || s.c != 3)
        throw std::invalid_argument("image to write must be [1,3,H,W], got " + s.str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P6\n" << s.w << " " << s.h << "\n255\n";
    std::vector<unsigned char> raw(size_t(s.h) * s.w * 3);
    for (int64_t c = 0; c < 3; ++c) {
        const T* p = img.plane(0, c);
        for (int64_t i = 0; i < s.h * s.w; ++i) {
            const double v = std::floor(double(p[i]) * 255.0 + 0.5);  // round half up
            // NaN fails the first test and lands on 0
            raw[i * 3 + c] = !(v >= 0.0) ? 0 : (v > 255.0 ? 255 : static_cast<unsigned char>(v));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw DataError("failed writing image: " + path);
}

namespace {

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u8(std::ostream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

uint32_t take_u32(std::istream& in, const std::string& path, const std::string& ctx) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw DataError("checkpoint truncated " + ctx + ": " + path);
    return v;
}

uint8_t take_u8(std::istream& in, const std::string& path, const std::string& ctx) {
    uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    if (!in) throw DataError("checkpoint truncated " + ctx + ": " + path);
    return v;
}

void take_bytes(std::istream& in, void* dst, int64_t n, const std::string& path,
                const std::string& ctx) {
    in.read(static_cast<char*>(dst), std::streamsize(n));
    if (!in) throw DataError("checkpoint truncated " + ctx + ": " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::vector<std::pair<std::string, int>> entries;  // name, dtype tag
    for (const auto& [name, t] : ck.f32) entries.emplace_back(name, 0);
    for (const auto& [name, t] : ck.f64) {
        if (ck.f32.count(name))
            throw std::invalid_argument("tensor '" + name + "' present in both dtypes");
        entries.emplace_back(name, 1);
    }
    std::sort(entries.begin(), entries.end());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("EDSC", 4);
    put_u32(out, ck.version);
    put_u32(out, uint32_t(ck.config.size()));
    for (const auto& [k, v] : ck.config) {
        const std::string line = k + "=" + v;
        put_u32(out, uint32_t(line.size()));
        out.write(line.data(), std::streamsize(line.size()));
    }
    put_u32(out, uint32_t(entries.size()));
    for (const auto& [name, tag] : entries) {
        put_u32(out, uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        put_u8(out, uint8_t(tag));
        put_u8(out, 4);
        const Shape4 s = tag == 0 ? ck.f32.at(name).shape() : ck.f64.at(name).shape();
        for (int64_t d : {s.b, s.c, s.h, s.w}) put_u32(out, uint32_t(d));
        if (tag == 0) {
            const auto& t = ck.f32.at(name);
            out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
        } else {
            const auto& t = ck.f64.at(name);
            out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 8));
        }
    }
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "EDSC")
        throw DataError("bad checkpoint magic in " + path);
    Checkpoint ck;
    ck.version = take_u32(in, path, "reading version");
    if (ck.version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(ck.version) + " in " +
                        path);
    const uint32_t nlines = take_u32(in, path, "reading config");
    if (nlines > 4096) throw DataError("implausible config line count in " + path);
    for (uint32_t i = 0; i < nlines; ++i) {
        const uint32_t len = take_u32(in, path, "reading config");
        if (len > 65536) throw DataError("implausible config line length in " + path);
        std::string line(len, '\0');
        take_bytes(in, line.data(), len, path, "reading config");
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("checkpoint config line without '=' in " + path);
        ck.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    const uint32_t ntensors = take_u32(in, path, "reading tensor count");
    if (ntensors > 100000) throw DataError("implausible tensor count in " + path);
    for (uint32_t i = 0; i < ntensors; ++i) {
        const uint32_t nlen = take_u32(in, path, "reading a tensor name");
        if (nlen == 0 || nlen > 4096)
            throw DataError("implausible tensor name length in " + path);
        std::string name(nlen, '\0');
        take_bytes(in, name.data(), nlen, path, "reading a tensor name");
        const std::string ctx = "reading tensor '" + name + "'";
        const uint8_t tag = take_u8(in, path, ctx);
        if (tag > 1) throw DataError("unknown dtype tag for tensor '" + name + "' in " + path);
        const uint8_t rank = take_u8(in, path, ctx);
        if (rank < 1 || rank > 4)
            throw DataError("unsupported rank for tensor '" + name + "' in " + path);
        int64_t dims[4] = {1, 1, 1, 1};
        int64_t numel = 1;
        for (int d = 4 - rank; d < 4; ++d) {
            dims[d] = take_u32(in, path, ctx);
            if (dims[d] < 1) throw DataError("zero dim in tensor '" + name + "' in " + path);
            numel *= dims[d];
            if (numel > (int64_t(1) << 27))
                throw DataError("implausible size for tensor '" + name + "' in " + path);
        }
        const Shape4 s{dims[0], dims[1], dims[2], dims[3]};
        if (ck.f32.count(name) || ck.f64.count(name))
            throw DataError("duplicate tensor '" + name + "' in " + path);
        if (tag == 0) {
            Tensor<float> t(s);
            take_bytes(in, t.data(), t.numel() * 4, path, ctx);
            ck.f32.emplace(std::move(name), std::move(t));
        } else {
            Tensor<double> t(s);
            take_bytes(in, t.data(), t.numel() * 8, path, ctx);
            ck.f64.emplace(std::move(name), std::move(t));
        }
    }
    if (in.peek() != EOF) throw DataError("trailing bytes after the last tensor in " + path);
    return ck;
}

template <typename T>
Checkpoint make_checkpoint(const Model<T>& m) {
    Checkpoint ck;
    ck.config = model_config_to_kv(m.config);
    if constexpr (std::is_same_v<T, float>)
        ck.f32 = m.params;
    else
        ck.f64 = m.params;
    return ck;
}

template <typename T>
void load_into_model(Model<T>& m, const Checkpoint& ck) {
    const KvPairs have = model_config_to_kv(model_config_from_kv(ck.config));
    const KvPairs want = model_config_to_kv(m.config);
    for (size_t i = 0; i < want.size(); ++i)
        if (have[i] != want[i])
            throw DataError("checkpoint config mismatch at " + want[i].first +
                            ": checkpoint has '" + have[i].second + "', model wants '" +
                            want[i].second + "'");
    const std::map<std::string, Tensor<T>>* src = nullptr;
    if constexpr (std::is_same_v<T, float>)
        src = &ck.f32;
    else
        src = &ck.f64;
    for (auto& [name, dst] : m.params) {
        const auto it = src->find(name);
        if (it == src->end())
            throw DataError("checkpoint is missing tensor '" + name + "' (or has a wrong dtype)");
        if (!(it->second.shape() == dst.shape()))
            throw DataError("checkpoint tensor '" + name + "' has shape " +
                            it->second.shape().str() + ", model wants " + dst.shape().str());
        dst = it->second;
    }
    for (const auto& kv : ck.f32)
        if (!std::is_same_v<T, float> || !m.params.count(kv.first))
            throw DataError("checkpoint has unexpected tensor '" + kv.first + "'");
    for (const auto& kv : ck.f64)
        if (!std::is_same_v<T, double> || !m.params.count(kv.first))
            throw DataError("checkpoint has unexpected tensor '" + kv.first + "'");
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck) {
    Model<T> m = build_model<T>(model_config_from_kv(ck.config), 0);
    load_into_model(m, ck);
    return m;
}

template Tensor<float> read_ppm<float>(const std::string&);
template Tensor<double> read_ppm<double>(const std::string&);
template void write_ppm<float>(const std::string&, const Tensor<float>&);
template void write_ppm<double>(const std::string&, const Tensor<double>&);
template Checkpoint make_checkpoint<float>(const Model<float>&);
template Checkpoint make_checkpoint<double>(const Model<double>&);
template void load_into_model<float>(Model<float>&, const Checkpoint&);
template void load_into_model<double>(Model<double>&, const Checkpoint&);
template Model<float> model_from_checkpoint<float>(const Checkpoint&);
template Model<double> model_from_checkpoint<double>(const Checkpoint&);

}  // namespace edsc
