#include "edsc/sampling.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "edsc/common.hpp"
#include "edsc/kernels.hpp"

static_assert(std::endian::native == std::endian::little,
              "flow file I/O assumes a little-endian host");

namespace edsc {

template <typename T>
T bilinear_sample(const Tensor<T>& img, int64_t b, int64_t c, T y, T x) {
    const Shape4 s = img.shape();
    const auto t = kernels::detail::make_tap(s.h, s.w, y, x);
    return kernels::detail::tap_sample(img.plane(b, c), s.w, t);
}

template <typename T>
Tensor<T> flow_warp(const Tensor<T>& img, const Tensor<T>& flow) {
    Tensor<T> out;
    kernels::warp_forward(out, img, flow);
    return out;
}

template <typename T>
Tensor<T> flow_as_conv(const Tensor<T>& img, const Tensor<T>& flow) {
    kernels::check_warp(img, flow);
    const Shape4 s = img.shape();
    const int64_t H = s.h, W = s.w;
    Tensor<T> out(s);
    const auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const T u = flow.plane(b, 0)[y * W + x];
                const T v = flow.plane(b, 1)[y * W + x];
                const T fu = std::floor(u), fv = std::floor(v);
                const T ay = u - fu, ax = v - fv;
                // 2x2 stencil placed at (floor u, floor v):
                //   [(1-ay)(1-ax)  (1-ay)ax]
                //   [   ay (1-ax)     ay ax]
                const T wgt[2][2] = {{(T(1) - ay) * (T(1) - ax), (T(1) - ay) * ax},
                                     {ay * (T(1) - ax), ay * ax}};
                const int64_t by = y + static_cast<int64_t>(fu);
                const int64_t bx = x + static_cast<int64_t>(fv);
                for (int64_t c = 0; c < s.c; ++c) {
                    const T* ip = img.plane(b, c);
                    T acc = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            acc += wgt[dy][dx] *
                                   ip[clampi(by + dy, H - 1) * W + clampi(bx + dx, W - 1)];
                    out.plane(b, c)[y * W + x] = acc;
                }
            }
    return out;
}

namespace {

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

Tensor<float> read_flo1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open flow file: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "FLO1")
        throw DataError("bad flow file magic in " + path);
    const uint32_t H = read_u32(in), W = read_u32(in);
    if (!in || H == 0 || W == 0 || int64_t(H) * W > (1 << 28))
        throw DataError("bad flow dimensions in " + path);
    std::vector<float> pairs(size_t(H) * W * 2);
    in.read(reinterpret_cast<char*>(pairs.data()), std::streamsize(pairs.size() * 4));
    if (!in) throw DataError("truncated flow file: " + path);
    Tensor<float> flow({1, 2, int64_t(H), int64_t(W)});
    for (int64_t i = 0; i < int64_t(H) * W; ++i) {
        flow.plane(0, 0)[i] = pairs[2 * i];      // dy
        flow.plane(0, 1)[i] = pairs[2 * i + 1];  // dx
    }
    return flow;
}

void write_flo1(const std::string& path, const Tensor<float>& flow) {
    const Shape4 s = flow.shape();
    if (s.b != 1 || s.c != 2)
        throw std::invalid_argument("flow to write must be [1,2,H,W], got " + s.str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write flow file: " + path);
    out.write("FLO1", 4);
    const uint32_t H = uint32_t(s.h), W = uint32_t(s.w);
    out.write(reinterpret_cast<const char*>(&H), 4);
    out.write(reinterpret_cast<const char*>(&W), 4);
    std::vector<float> pairs(size_t(s.h) * s.w * 2);
    for (int64_t i = 0; i < s.h * s.w; ++i) {
        pairs[2 * i] = flow.plane(0, 0)[i];
        pairs[2 * i + 1] = flow.plane(0, 1)[i];
    }
    out.write(reinterpret_cast<const char*>(pairs.data()), std::streamsize(pairs.size() * 4));
    if (!out) throw DataError("failed writing flow file: " + path);
}

template float bilinear_sample<float>(const Tensor<float>&, int64_t, int64_t, float, float);
template double bilinear_sample<double>(const Tensor<double>&, int64_t, int64_t, double, double);
template Tensor<float> flow_warp<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> flow_warp<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> flow_as_conv<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> flow_as_conv<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace edsc
