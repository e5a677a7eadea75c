#pragma once

#include <cmath>
#include <cstdint>

#include "edsc/tensor.hpp"
#include "edsc/threading.hpp"

// Raw numeric kernels. Every heavy kernel exists twice: a serial reference
// under kernels::serial and an OpenMP variant under kernels::par. The
// unqualified wrappers dispatch on the global thread setting. Both variants
// accumulate into already-allocated gradient buffers. Forward passes and
// gather-form backwards are bitwise identical between the two variants; the
// scatter-form image gradients (warp, deformable synthesis) agree to rounding
// and are deterministic run to run at a fixed thread setting.
namespace edsc::kernels {

namespace detail {

// Bilinear tap at (y, x) with replicate (clamped) borders. Weights come from
// the unclamped coordinate, so they always sum to 1 and the derivative w.r.t.
// the coordinate is the plain finite difference of the clamped corners. At
// integer coordinates the derivative is right-sided.
template <typename T>
struct Tap {
    int64_t y0, y1, x0, x1;  // clamped corner indices
    T wy0, wy1, wx0, wx1;    // interpolation weights
};

template <typename T>
inline Tap<T> make_tap(int64_t H, int64_t W, T y, T x) {
    const T fy = std::floor(y), fx = std::floor(x);
    Tap<T> t;
    t.wy1 = y - fy;
    t.wy0 = T(1) - t.wy1;
    t.wx1 = x - fx;
    t.wx0 = T(1) - t.wx1;
    const auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    const int64_t iy = static_cast<int64_t>(fy), ix = static_cast<int64_t>(fx);
    t.y0 = clampi(iy, H - 1);
    t.y1 = clampi(iy + 1, H - 1);
    t.x0 = clampi(ix, W - 1);
    t.x1 = clampi(ix + 1, W - 1);
    return t;
}

template <typename T>
inline T tap_sample(const T* plane, int64_t W, const Tap<T>& t) {
    return t.wy0 * (t.wx0 * plane[t.y0 * W + t.x0] + t.wx1 * plane[t.y0 * W + t.x1]) +
           t.wy1 * (t.wx0 * plane[t.y1 * W + t.x0] + t.wx1 * plane[t.y1 * W + t.x1]);
}

// d(sample)/dy and d(sample)/dx.
template <typename T>
inline T tap_dy(const T* plane, int64_t W, const Tap<T>& t) {
    return (t.wx0 * plane[t.y1 * W + t.x0] + t.wx1 * plane[t.y1 * W + t.x1]) -
           (t.wx0 * plane[t.y0 * W + t.x0] + t.wx1 * plane[t.y0 * W + t.x1]);
}

template <typename T>
inline T tap_dx(const T* plane, int64_t W, const Tap<T>& t) {
    return (t.wy0 * plane[t.y0 * W + t.x1] + t.wy1 * plane[t.y1 * W + t.x1]) -
           (t.wy0 * plane[t.y0 * W + t.x0] + t.wy1 * plane[t.y1 * W + t.x0]);
}

template <typename T>
inline void tap_scatter(T* plane, int64_t W, const Tap<T>& t, T g) {
    plane[t.y0 * W + t.x0] += g * t.wy0 * t.wx0;
    plane[t.y0 * W + t.x1] += g * t.wy0 * t.wx1;
    plane[t.y1 * W + t.x0] += g * t.wy1 * t.wx0;
    plane[t.y1 * W + t.x1] += g * t.wy1 * t.wx1;
}

}  // namespace detail

// Largest supported deformable kernel edge. Per-pixel scratch in the fused
// kernels is stack-allocated against this bound.
inline constexpr int kMaxKernelEdge = 11;

// Bundles the per-pixel field inputs of the deformable synthesis op.
// Pointers m1/m2/db may be null: a missing mask acts as all-ones, a missing
// bias as zero, and no gradient is produced for them.
template <typename T>
struct EdscArgs {
    const Tensor<T>* I1;    // [B,C,H,W]
    const Tensor<T>* I2;    // [B,C,H,W]
    const Tensor<T>* kv1;   // [B,n,H,W] vertical kernel, frame 1
    const Tensor<T>* kh1;   // [B,n,H,W] horizontal kernel, frame 1
    const Tensor<T>* kv2;   // [B,n,H,W]
    const Tensor<T>* kh2;   // [B,n,H,W]
    const Tensor<T>* off1;  // [B,2n^2,H,W]: n^2 dy channels then n^2 dx channels
    const Tensor<T>* off2;  // [B,2n^2,H,W]
    const Tensor<T>* m1;    // [B,n^2,H,W] or null
    const Tensor<T>* m2;    // [B,n^2,H,W] or null
    const Tensor<T>* db;    // [B,C,H,W] or null
    int n;
};

template <typename T>
struct EdscGrads {
    Tensor<T>* I1 = nullptr;
    Tensor<T>* I2 = nullptr;
    Tensor<T>* kv1 = nullptr;
    Tensor<T>* kh1 = nullptr;
    Tensor<T>* kv2 = nullptr;
    Tensor<T>* kh2 = nullptr;
    Tensor<T>* off1 = nullptr;
    Tensor<T>* off2 = nullptr;
    Tensor<T>* m1 = nullptr;
    Tensor<T>* m2 = nullptr;
    Tensor<T>* db = nullptr;
};

#define EDSC_KERNEL_DECLS                                                                      \
    template <typename T>                                                                      \
    void conv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w,               \
                        const Tensor<T>* bias);                                                \
    template <typename T>                                                                      \
    void conv2d_backward(Tensor<T>* gin, Tensor<T>* gw, Tensor<T>* gb, const Tensor<T>& gout,  \
                         const Tensor<T>& in, const Tensor<T>& w);                             \
    template <typename T>                                                                      \
    void hetconv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w3,           \
                           const Tensor<T>& w1, const Tensor<T>* bias);                        \
    template <typename T>                                                                      \
    void hetconv2d_backward(Tensor<T>* gin, Tensor<T>* gw3, Tensor<T>* gw1, Tensor<T>* gb,     \
                            const Tensor<T>& gout, const Tensor<T>& in, const Tensor<T>& w3,   \
                            const Tensor<T>& w1);                                              \
    template <typename T>                                                                      \
    void relu_forward(Tensor<T>& out, const Tensor<T>& in);                                    \
    template <typename T>                                                                      \
    void relu_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& in);            \
    template <typename T>                                                                      \
    void sigmoid_forward(Tensor<T>& out, const Tensor<T>& in);                                 \
    template <typename T>                                                                      \
    void sigmoid_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& out);        \
    template <typename T>                                                                      \
    void avg_pool2x2_forward(Tensor<T>& out, const Tensor<T>& in);                             \
    template <typename T>                                                                      \
    void avg_pool2x2_backward(Tensor<T>& gin, const Tensor<T>& gout);                          \
    template <typename T>                                                                      \
    void upsample2x_forward(Tensor<T>& out, const Tensor<T>& in);                              \
    template <typename T>                                                                      \
    void upsample2x_backward(Tensor<T>& gin, const Tensor<T>& gout);                           \
    template <typename T>                                                                      \
    void warp_forward(Tensor<T>& out, const Tensor<T>& img, const Tensor<T>& flow);            \
    template <typename T>                                                                      \
    void warp_backward(Tensor<T>* gimg, Tensor<T>* gflow, const Tensor<T>& gout,               \
                       const Tensor<T>& img, const Tensor<T>& flow);                           \
    template <typename T>                                                                      \
    void edsc_forward(Tensor<T>& out, const EdscArgs<T>& a);                                   \
    template <typename T>                                                                      \
    void edsc_backward(const EdscGrads<T>& g, const Tensor<T>& gout, const EdscArgs<T>& a);

namespace serial {
EDSC_KERNEL_DECLS
}

namespace par {
EDSC_KERNEL_DECLS
}

#undef EDSC_KERNEL_DECLS

// Shape validation shared by both variants; throws std::invalid_argument.
template <typename T>
void check_conv2d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias);
template <typename T>
void check_hetconv2d(const Tensor<T>& in, const Tensor<T>& w3, const Tensor<T>& w1,
                     const Tensor<T>* bias);
template <typename T>
void check_warp(const Tensor<T>& img, const Tensor<T>& flow);
template <typename T>
void check_edsc(const EdscArgs<T>& a);

template <typename T>
bool all_finite(const Tensor<T>& t);

// ---- dispatching wrappers ----

template <typename T>
inline void conv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w,
                           const Tensor<T>* bias) {
    check_conv2d(in, w, bias);
    const Shape4 os{in.shape().b, w.shape().b, in.shape().h, in.shape().w};
    if (!(out.shape() == os)) out = Tensor<T>(os);
    if (threading::parallel_enabled())
        par::conv2d_forward(out, in, w, bias);
    else
        serial::conv2d_forward(out, in, w, bias);
}

template <typename T>
inline void conv2d_backward(Tensor<T>* gin, Tensor<T>* gw, Tensor<T>* gb, const Tensor<T>& gout,
                            const Tensor<T>& in, const Tensor<T>& w) {
    if (threading::parallel_enabled())
        par::conv2d_backward(gin, gw, gb, gout, in, w);
    else
        serial::conv2d_backward(gin, gw, gb, gout, in, w);
}

template <typename T>
inline void hetconv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w3,
                              const Tensor<T>& w1, const Tensor<T>* bias) {
    check_hetconv2d(in, w3, w1, bias);
    const Shape4 os{in.shape().b, w3.shape().b, in.shape().h, in.shape().w};
    if (!(out.shape() == os)) out = Tensor<T>(os);
    if (threading::parallel_enabled())
        par::hetconv2d_forward(out, in, w3, w1, bias);
    else
        serial::hetconv2d_forward(out, in, w3, w1, bias);
}

template <typename T>
inline void hetconv2d_backward(Tensor<T>* gin, Tensor<T>* gw3, Tensor<T>* gw1, Tensor<T>* gb,
                               const Tensor<T>& gout, const Tensor<T>& in, const Tensor<T>& w3,
                               const Tensor<T>& w1) {
    if (threading::parallel_enabled())
        par::hetconv2d_backward(gin, gw3, gw1, gb, gout, in, w3, w1);
    else
        serial::hetconv2d_backward(gin, gw3, gw1, gb, gout, in, w3, w1);
}

#define EDSC_DISPATCH1(name, a)                 \
    if (threading::parallel_enabled())          \
        par::name a;                            \
    else                                        \
        serial::name a;

template <typename T>
inline void relu_forward(Tensor<T>& out, const Tensor<T>& in) {
    if (!(out.shape() == in.shape())) out = Tensor<T>(in.shape());
    EDSC_DISPATCH1(relu_forward, (out, in))
}

template <typename T>
inline void relu_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& in) {
    EDSC_DISPATCH1(relu_backward, (gin, gout, in))
}

template <typename T>
inline void sigmoid_forward(Tensor<T>& out, const Tensor<T>& in) {
    if (!(out.shape() == in.shape())) out = Tensor<T>(in.shape());
    EDSC_DISPATCH1(sigmoid_forward, (out, in))
}

template <typename T>
inline void sigmoid_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& out) {
    EDSC_DISPATCH1(sigmoid_backward, (gin, gout, out))
}

template <typename T>
inline void avg_pool2x2_forward(Tensor<T>& out, const Tensor<T>& in) {
    const auto s = in.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw std::invalid_argument("avg_pool2x2 requires even H and W, got " + s.str());
    const Shape4 os{s.b, s.c, s.h / 2, s.w / 2};
    if (!(out.shape() == os)) out = Tensor<T>(os);
    EDSC_DISPATCH1(avg_pool2x2_forward, (out, in))
}

template <typename T>
inline void avg_pool2x2_backward(Tensor<T>& gin, const Tensor<T>& gout) {
    EDSC_DISPATCH1(avg_pool2x2_backward, (gin, gout))
}

template <typename T>
inline void upsample2x_forward(Tensor<T>& out, const Tensor<T>& in) {
    const auto s = in.shape();
    const Shape4 os{s.b, s.c, s.h * 2, s.w * 2};
    if (!(out.shape() == os)) out = Tensor<T>(os);
    EDSC_DISPATCH1(upsample2x_forward, (out, in))
}

template <typename T>
inline void upsample2x_backward(Tensor<T>& gin, const Tensor<T>& gout) {
    EDSC_DISPATCH1(upsample2x_backward, (gin, gout))
}

template <typename T>
inline void warp_forward(Tensor<T>& out, const Tensor<T>& img, const Tensor<T>& flow) {
    check_warp(img, flow);
    if (!(out.shape() == img.shape())) out = Tensor<T>(img.shape());
    EDSC_DISPATCH1(warp_forward, (out, img, flow))
}

template <typename T>
inline void warp_backward(Tensor<T>* gimg, Tensor<T>* gflow, const Tensor<T>& gout,
                          const Tensor<T>& img, const Tensor<T>& flow) {
    EDSC_DISPATCH1(warp_backward, (gimg, gflow, gout, img, flow))
}

template <typename T>
inline void edsc_forward(Tensor<T>& out, const EdscArgs<T>& a) {
    check_edsc(a);
    if (!(out.shape() == a.I1->shape())) out = Tensor<T>(a.I1->shape());
    EDSC_DISPATCH1(edsc_forward, (out, a))
}

template <typename T>
inline void edsc_backward(const EdscGrads<T>& g, const Tensor<T>& gout, const EdscArgs<T>& a) {
    EDSC_DISPATCH1(edsc_backward, (g, gout, a))
}

#undef EDSC_DISPATCH1

}  // namespace edsc::kernels
