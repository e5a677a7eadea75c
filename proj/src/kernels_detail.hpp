#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "edsc/kernels.hpp"

// Per-pixel and per-plane workers shared by the serial and OpenMP kernel
// variants. Keeping the arithmetic single-sourced is what makes the two
// variants bitwise comparable; only the loop scheduling differs.
namespace edsc::kernels::detail {

// out(y,x) += wv * in(y+sy, x+sx) over the region where the shifted index is
// in bounds. This is the inner sweep of all conv kernels; the inner loop is
// contiguous so it vectorizes.
template <typename T>
inline void sweep_acc(T* out, const T* in, int64_t H, int64_t W, int64_t sy, int64_t sx, T wv) {
    const int64_t y0 = std::max<int64_t>(0, -sy), y1 = std::min(H, H - sy);
    const int64_t x0 = std::max<int64_t>(0, -sx), x1 = std::min(W, W - sx);
    for (int64_t y = y0; y < y1; ++y) {
        T* orow = out + y * W;
        const T* irow = in + (y + sy) * W + sx;
        for (int64_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
    }
}

// sum over the valid region of a(y,x) * b(y+sy, x+sx).
template <typename T>
inline T sweep_dot(const T* a, const T* b, int64_t H, int64_t W, int64_t sy, int64_t sx) {
    const int64_t y0 = std::max<int64_t>(0, -sy), y1 = std::min(H, H - sy);
    const int64_t x0 = std::max<int64_t>(0, -sx), x1 = std::min(W, W - sx);
    T s = 0;
    for (int64_t y = y0; y < y1; ++y) {
        const T* ar = a + y * W;
        const T* br = b + (y + sy) * W + sx;
        for (int64_t x = x0; x < x1; ++x) s += ar[x] * br[x];
    }
    return s;
}

// For filter m of a mixed-kernel conv, the 3x3 input channels are the c3
// consecutive channels starting at (m * c3) mod Cin, wrapping; the remaining
// c1 channels get 1x1 weights.
inline int64_t hetconv_start(int64_t m, int64_t c3, int64_t cin) { return (m * c3) % cin; }

// Inverse channel maps for the input gradient: for each input channel, which
// (filter, slot) pairs touch it through the 3x3 and 1x1 parts.
struct HetconvMaps {
    std::vector<std::vector<std::pair<int64_t, int64_t>>> taps3, taps1;
};

inline HetconvMaps hetconv_inverse(int64_t cout, int64_t cin, int64_t c3) {
    HetconvMaps maps;
    maps.taps3.resize(cin);
    maps.taps1.resize(cin);
    for (int64_t m = 0; m < cout; ++m) {
        const int64_t s = hetconv_start(m, c3, cin);
        for (int64_t i = 0; i < c3; ++i) maps.taps3[(s + i) % cin].push_back({m, i});
        for (int64_t j = 0; j < cin - c3; ++j) maps.taps1[(s + c3 + j) % cin].push_back({m, j});
    }
    return maps;
}

// Value plus coordinate derivatives of one bilinear tap, reading the four
// corners once.
template <typename T>
struct TapRead {
    T v, dy, dx;
};

template <typename T>
inline TapRead<T> tap_read(const T* plane, int64_t W, const Tap<T>& t) {
    const T p00 = plane[t.y0 * W + t.x0], p01 = plane[t.y0 * W + t.x1];
    const T p10 = plane[t.y1 * W + t.x0], p11 = plane[t.y1 * W + t.x1];
    TapRead<T> r;
    r.v = t.wy0 * (t.wx0 * p00 + t.wx1 * p01) + t.wy1 * (t.wx0 * p10 + t.wx1 * p11);
    r.dy = (t.wx0 * p10 + t.wx1 * p11) - (t.wx0 * p00 + t.wx1 * p01);
    r.dx = (t.wy0 * p01 + t.wy1 * p11) - (t.wy0 * p00 + t.wy1 * p10);
    return r;
}

// One output pixel of the deformable synthesis op. acc must hold C entries.
template <typename T>
inline void edsc_pixel_forward(T* acc, const EdscArgs<T>& a, int64_t b, int64_t y, int64_t x) {
    const int64_t n = a.n, n2 = n * n;
    const Shape4 s = a.I1->shape();
    const int64_t C = s.c, H = s.h, W = s.w, HW = H * W, i = y * W + x;
    const T rlo = -T(n - 1) / T(2);

    for (int64_t c = 0; c < C; ++c) acc[c] = a.db ? a.db->plane(b, c)[i] : T(0);

    for (int f = 0; f < 2; ++f) {
        const Tensor<T>& img = f == 0 ? *a.I1 : *a.I2;
        const T* kvp = (f == 0 ? a.kv1 : a.kv2)->plane(b, 0) + i;
        const T* khp = (f == 0 ? a.kh1 : a.kh2)->plane(b, 0) + i;
        const T* offp = (f == 0 ? a.off1 : a.off2)->plane(b, 0) + i;
        const Tensor<T>* m = f == 0 ? a.m1 : a.m2;
        const T* mp = m ? m->plane(b, 0) + i : nullptr;
        for (int64_t j = 0; j < n2; ++j) {
            const T kk = kvp[(j / n) * HW] * khp[(j % n) * HW] * (mp ? mp[j * HW] : T(1));
            const T sy = T(y) + rlo + T(j / n) + offp[j * HW];
            const T sx = T(x) + rlo + T(j % n) + offp[(n2 + j) * HW];
            const Tap<T> t = make_tap(H, W, sy, sx);
            for (int64_t c = 0; c < C; ++c) acc[c] += kk * tap_sample(img.plane(b, c), W, t);
        }
    }
}

// Backward of one output pixel. gI1/gI2 are the image-gradient accumulation
// targets (the real gradients in the serial path, per-chunk buffers in the
// parallel path); every other gradient location is owned by this pixel alone.
template <typename T>
inline void edsc_pixel_backward(const EdscGrads<T>& g, Tensor<T>* gI1, Tensor<T>* gI2,
                                const Tensor<T>& gout, const EdscArgs<T>& a, int64_t b,
                                int64_t y, int64_t x) {
    const int64_t n = a.n, n2 = n * n;
    const Shape4 s = a.I1->shape();
    const int64_t C = s.c, H = s.h, W = s.w, HW = H * W, i = y * W + x;
    const T rlo = -T(n - 1) / T(2);

    T go[16];
    for (int64_t c = 0; c < C; ++c) go[c] = gout.plane(b, c)[i];

    for (int f = 0; f < 2; ++f) {
        const Tensor<T>& img = f == 0 ? *a.I1 : *a.I2;
        const T* kvp = (f == 0 ? a.kv1 : a.kv2)->plane(b, 0) + i;
        const T* khp = (f == 0 ? a.kh1 : a.kh2)->plane(b, 0) + i;
        const T* offp = (f == 0 ? a.off1 : a.off2)->plane(b, 0) + i;
        const Tensor<T>* m = f == 0 ? a.m1 : a.m2;
        const T* mp = m ? m->plane(b, 0) + i : nullptr;

        Tensor<T>* gimg = f == 0 ? gI1 : gI2;
        Tensor<T>* gkv = f == 0 ? g.kv1 : g.kv2;
        Tensor<T>* gkh = f == 0 ? g.kh1 : g.kh2;
        Tensor<T>* goff = f == 0 ? g.off1 : g.off2;
        Tensor<T>* gm = f == 0 ? g.m1 : g.m2;

        for (int64_t j = 0; j < n2; ++j) {
            const T kv = kvp[(j / n) * HW], kh = khp[(j % n) * HW];
            const T mv = mp ? mp[j * HW] : T(1);
            const T kk = kv * kh * mv;
            const T sy = T(y) + rlo + T(j / n) + offp[j * HW];
            const T sx = T(x) + rlo + T(j % n) + offp[(n2 + j) * HW];
            const Tap<T> t = make_tap(H, W, sy, sx);

            T sdot = 0, dyv = 0, dxv = 0;
            for (int64_t c = 0; c < C; ++c) {
                const TapRead<T> r = tap_read(img.plane(b, c), W, t);
                sdot += go[c] * r.v;
                dyv += go[c] * r.dy;
                dxv += go[c] * r.dx;
                if (gimg) tap_scatter(gimg->plane(b, c), W, t, kk * go[c]);
            }
            if (gkv) gkv->plane(b, j / n)[i] += kh * mv * sdot;
            if (gkh) gkh->plane(b, j % n)[i] += kv * mv * sdot;
            if (gm) gm->plane(b, j)[i] += kv * kh * sdot;
            if (goff) {
                goff->plane(b, j)[i] += kk * dyv;
                goff->plane(b, n2 + j)[i] += kk * dxv;
            }
        }
    }
    if (g.db)
        for (int64_t c = 0; c < C; ++c) g.db->plane(b, c)[i] += go[c];
}

// One output pixel of backward warping, and its backward.
template <typename T>
inline void warp_pixel_forward(Tensor<T>& out, const Tensor<T>& img, const Tensor<T>& flow,
                               int64_t b, int64_t y, int64_t x) {
    const Shape4 s = img.shape();
    const int64_t C = s.c, H = s.h, W = s.w, i = y * W + x;
    const Tap<T> t =
        make_tap(H, W, T(y) + flow.plane(b, 0)[i], T(x) + flow.plane(b, 1)[i]);
    for (int64_t c = 0; c < C; ++c) out.plane(b, c)[i] = tap_sample(img.plane(b, c), W, t);
}

template <typename T>
inline void warp_pixel_backward(Tensor<T>* gimg, Tensor<T>* gflow, const Tensor<T>& gout,
                                const Tensor<T>& img, const Tensor<T>& flow, int64_t b,
                                int64_t y, int64_t x) {
    const Shape4 s = img.shape();
    const int64_t C = s.c, H = s.h, W = s.w, i = y * W + x;
    const Tap<T> t =
        make_tap(H, W, T(y) + flow.plane(b, 0)[i], T(x) + flow.plane(b, 1)[i]);
    T dyv = 0, dxv = 0;
    for (int64_t c = 0; c < C; ++c) {
        const T go = gout.plane(b, c)[i];
        const TapRead<T> r = tap_read(img.plane(b, c), W, t);
        dyv += go * r.dy;
        dxv += go * r.dx;
        if (gimg) tap_scatter(gimg->plane(b, c), W, t, go);
    }
    if (gflow) {
        gflow->plane(b, 0)[i] += dyv;
        gflow->plane(b, 1)[i] += dxv;
    }
}

// Source taps of one upsampled output row/col index under the 2x bilinear
// align-corners-false mapping: in-coordinate = out/2 - 0.25.
template <typename T>
inline Tap<T> upsample_tap(int64_t H, int64_t W, int64_t Y, int64_t X) {
    return make_tap(H, W, T(Y) * T(0.5) - T(0.25), T(X) * T(0.5) - T(0.25));
}

}  // namespace edsc::kernels::detail
