#include "edsc/deformable.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace edsc {

template <typename T>
Tensor<T> edsc_forward(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& kv1,
                       const Tensor<T>& kh1, const Tensor<T>& kv2, const Tensor<T>& kh2,
                       const Tensor<T>& off1, const Tensor<T>& off2, const Tensor<T>* m1,
                       const Tensor<T>* m2, const Tensor<T>* db, int n) {
    kernels::EdscArgs<T> a{&I1, &I2, &kv1, &kh1, &kv2, &kh2, &off1, &off2, m1, m2, db, n};
    Tensor<T> out;
    kernels::edsc_forward(out, a);
    return out;
}

namespace {

// One frame's separable contribution on the regular grid, accumulated into
// out. Reads integer positions directly with clamped indices.
template <typename T>
void sepconv_accumulate(Tensor<T>& out, const Tensor<T>& img, const Tensor<T>& kv,
                        const Tensor<T>& kh, int n) {
    const Shape4 s = img.shape();
    const int64_t H = s.h, W = s.w;
    const int rlo = -(n - 1) / 2;
    const auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int ky = 0; ky < n; ++ky) {
                    const T wv = kv.plane(b, ky)[y * W + x];
                    const int64_t sy = clampi(y + rlo + ky, H - 1);
                    for (int kx = 0; kx < n; ++kx) {
                        const T wh = kh.plane(b, kx)[y * W + x];
                        const int64_t sx = clampi(x + rlo + kx, W - 1);
                        for (int64_t c = 0; c < s.c; ++c)
                            out.plane(b, c)[y * W + x] +=
                                wv * wh * img.plane(b, c)[sy * W + sx];
                    }
                }
}

}  // namespace

template <typename T>
Tensor<T> sepconv_reference(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& kv1,
                            const Tensor<T>& kh1, const Tensor<T>& kv2, const Tensor<T>& kh2,
                            int n) {
    if (!(I1.shape() == I2.shape()))
        throw std::invalid_argument("frame shapes differ: " + I1.shape().str() + " vs " +
                                    I2.shape().str());
    const Shape4 ks{I1.shape().b, n, I1.shape().h, I1.shape().w};
    require_shape(kv1, ks, "kv1");
    require_shape(kh1, ks, "kh1");
    require_shape(kv2, ks, "kv2");
    require_shape(kh2, ks, "kh2");
    Tensor<T> out(I1.shape());
    out.fill(T(0));
    sepconv_accumulate(out, I1, kv1, kh1, n);
    sepconv_accumulate(out, I2, kv2, kh2, n);
    return out;
}

template <typename T>
Tensor<T> flow_mode(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& w1,
                    const Tensor<T>& w2, const Tensor<T>& f1, const Tensor<T>& f2) {
    if (!(I1.shape() == I2.shape()))
        throw std::invalid_argument("frame shapes differ: " + I1.shape().str() + " vs " +
                                    I2.shape().str());
    const Shape4 s = I1.shape();
    const Shape4 ws{s.b, 1, s.h, s.w};
    require_shape(w1, ws, "w1");
    require_shape(w2, ws, "w2");
    Tensor<T> r1, r2;
    kernels::warp_forward(r1, I1, f1);
    kernels::warp_forward(r2, I2, f2);
    Tensor<T> out(s);
    const int64_t HW = s.h * s.w;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            const T* a1 = r1.plane(b, c);
            const T* a2 = r2.plane(b, c);
            const T* g1 = w1.plane(b, 0);
            const T* g2 = w2.plane(b, 0);
            T* o = out.plane(b, c);
            for (int64_t i = 0; i < HW; ++i) o[i] = g1[i] * a1[i] + g2[i] * a2[i];
        }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> naive_time_rescale(const Tensor<T>& off1, const Tensor<T>& off2,
                                                   T t) {
    const T s1 = t / T(0.5);
    const T s2 = (T(1) - t) / T(0.5);
    Tensor<T> r1(off1.shape()), r2(off2.shape());
    for (int64_t i = 0; i < off1.shape().numel(); ++i) r1[i] = off1[i] * s1;
    for (int64_t i = 0; i < off2.shape().numel(); ++i) r2[i] = off2[i] * s2;
    return {std::move(r1), std::move(r2)};
}

template <typename T>
Tensor<T> effective_sampling_map(const Tensor<T>& kv, const Tensor<T>& kh, const Tensor<T>* m,
                                 const Tensor<T>& off, int n) {
    const Shape4 s = kv.shape();
    if (s.c != n) throw std::invalid_argument("kv channels must equal n, got " + s.str());
    require_shape(kh, s, "kh");
    const int64_t H = s.h, W = s.w;
    const Shape4 os{s.b, int64_t(2) * n * n, H, W};
    require_shape(off, os, "off");
    if (m) require_shape(*m, Shape4{s.b, int64_t(n) * n, H, W}, "mask");
    Tensor<T> map({s.b, 1, H, W});
    map.fill(T(0));
    const int rlo = -(n - 1) / 2;
    const int64_t HW = H * W;
    for (int64_t b = 0; b < s.b; ++b) {
        T* mp = map.plane(b, 0);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const int64_t p = y * W + x;
                const T* offp = off.plane(b, 0) + p;
                const T* mkp = m ? m->plane(b, 0) + p : nullptr;
                for (int j = 0; j < n * n; ++j) {
                    T w = kv.plane(b, j / n)[p] * kh.plane(b, j % n)[p];
                    if (mkp) w *= mkp[j * HW];
                    const T sy = T(y + rlo + j / n) + offp[j * HW];
                    const T sx = T(x + rlo + j % n) + offp[(int64_t(n) * n + j) * HW];
                    const auto tp = kernels::detail::make_tap(H, W, sy, sx);
                    kernels::detail::tap_scatter(mp, W, tp, std::abs(w));
                }
            }
    }
    return map;
}

#define EDSC_DEFORMABLE_INSTANTIATE(T)                                                            \
    template Tensor<T> edsc_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                       const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                       const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,      \
                                       const Tensor<T>*, const Tensor<T>*, int);                  \
    template Tensor<T> sepconv_reference<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                            const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                            int);                                                 \
    template Tensor<T> flow_mode<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                    const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
    template std::pair<Tensor<T>, Tensor<T>> naive_time_rescale<T>(const Tensor<T>&,              \
                                                                   const Tensor<T>&, T);          \
    template Tensor<T> effective_sampling_map<T>(const Tensor<T>&, const Tensor<T>&,              \
                                                 const Tensor<T>*, const Tensor<T>&, int);

EDSC_DEFORMABLE_INSTANTIATE(float)
EDSC_DEFORMABLE_INSTANTIATE(double)

#undef EDSC_DEFORMABLE_INSTANTIATE

}  // namespace edsc
