#include "kernels_detail.hpp"

namespace edsc::kernels::serial {

using namespace edsc::kernels::detail;

template <typename T>
void conv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w,
                    const Tensor<T>* bias) {
    const Shape4 s = in.shape();
    const int64_t B = s.b, Cin = s.c, H = s.h, W = s.w;
    const int64_t Cout = w.shape().b, k = w.shape().h, p = k / 2;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co) {
            T* op = out.plane(b, co);
            std::fill(op, op + H * W, bias ? (*bias)[co] : T(0));
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const T* ip = in.plane(b, ci);
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx)
                        sweep_acc(op, ip, H, W, ky - p, kx - p, w.at(co, ci, ky, kx));
            }
        }
}

template <typename T>
void conv2d_backward(Tensor<T>* gin, Tensor<T>* gw, Tensor<T>* gb, const Tensor<T>& gout,
                     const Tensor<T>& in, const Tensor<T>& w) {
    const Shape4 s = in.shape();
    const int64_t B = s.b, Cin = s.c, H = s.h, W = s.w;
    const int64_t Cout = w.shape().b, k = w.shape().h, p = k / 2;
    if (gb)
        for (int64_t co = 0; co < Cout; ++co) {
            T acc = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* gp = gout.plane(b, co);
                for (int64_t i = 0; i < H * W; ++i) acc += gp[i];
            }
            (*gb)[co] += acc;
        }
    if (gw)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        T acc = 0;
                        for (int64_t b = 0; b < B; ++b)
                            acc += sweep_dot(gout.plane(b, co), in.plane(b, ci), H, W, ky - p,
                                             kx - p);
                        gw->at(co, ci, ky, kx) += acc;
                    }
    if (gin)
        for (int64_t b = 0; b < B; ++b)
            for (int64_t ci = 0; ci < Cin; ++ci) {
                T* gp = gin->plane(b, ci);
                for (int64_t co = 0; co < Cout; ++co)
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx)
                            sweep_acc(gp, gout.plane(b, co), H, W, p - ky, p - kx,
                                      w.at(co, ci, ky, kx));
            }
}

template <typename T>
void hetconv2d_forward(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& w3,
                       const Tensor<T>& w1, const Tensor<T>* bias) {
    const Shape4 s = in.shape();
    const int64_t B = s.b, Cin = s.c, H = s.h, W = s.w;
    const int64_t Cout = w3.shape().b, c3 = w3.shape().c, c1 = w1.shape().c;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t m = 0; m < Cout; ++m) {
            T* op = out.plane(b, m);
            std::fill(op, op + H * W, bias ? (*bias)[m] : T(0));
            const int64_t start = hetconv_start(m, c3, Cin);
            for (int64_t i = 0; i < c3; ++i) {
                const T* ip = in.plane(b, (start + i) % Cin);
                for (int64_t ky = 0; ky < 3; ++ky)
                    for (int64_t kx = 0; kx < 3; ++kx)
                        sweep_acc(op, ip, H, W, ky - 1, kx - 1, w3.at(m, i, ky, kx));
            }
            for (int64_t j = 0; j < c1; ++j) {
                const T* ip = in.plane(b, (start + c3 + j) % Cin);
                sweep_acc(op, ip, H, W, 0, 0, w1.at(m, j, 0, 0));
            }
        }
}

template <typename T>
void hetconv2d_backward(Tensor<T>* gin, Tensor<T>* gw3, Tensor<T>* gw1, Tensor<T>* gb,
                        const Tensor<T>& gout, const Tensor<T>& in, const Tensor<T>& w3,
                        const Tensor<T>& w1) {
    const Shape4 s = in.shape();
    const int64_t B = s.b, Cin = s.c, H = s.h, W = s.w;
    const int64_t Cout = w3.shape().b, c3 = w3.shape().c, c1 = w1.shape().c;
    if (gb)
        for (int64_t m = 0; m < Cout; ++m) {
            T acc = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* gp = gout.plane(b, m);
                for (int64_t i = 0; i < H * W; ++i) acc += gp[i];
            }
            (*gb)[m] += acc;
        }
    if (gw3)
        for (int64_t m = 0; m < Cout; ++m) {
            const int64_t start = hetconv_start(m, c3, Cin);
            for (int64_t i = 0; i < c3; ++i)
                for (int64_t ky = 0; ky < 3; ++ky)
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        T acc = 0;
                        for (int64_t b = 0; b < B; ++b)
                            acc += sweep_dot(gout.plane(b, m), in.plane(b, (start + i) % Cin), H,
                                             W, ky - 1, kx - 1);
                        gw3->at(m, i, ky, kx) += acc;
                    }
        }
    if (gw1)
        for (int64_t m = 0; m < Cout; ++m) {
            const int64_t start = hetconv_start(m, c3, Cin);
            for (int64_t j = 0; j < c1; ++j) {
                T acc = 0;
                for (int64_t b = 0; b < B; ++b)
                    acc += sweep_dot(gout.plane(b, m), in.plane(b, (start + c3 + j) % Cin), H, W,
                                     0, 0);
                gw1->at(m, j, 0, 0) += acc;
            }
        }
    if (gin) {
        const HetconvMaps maps = hetconv_inverse(Cout, Cin, c3);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t ci = 0; ci < Cin; ++ci) {
                T* gp = gin->plane(b, ci);
                for (const auto& [m, i] : maps.taps3[ci])
                    for (int64_t ky = 0; ky < 3; ++ky)
                        for (int64_t kx = 0; kx < 3; ++kx)
                            sweep_acc(gp, gout.plane(b, m), H, W, 1 - ky, 1 - kx,
                                      w3.at(m, i, ky, kx));
                for (const auto& [m, j] : maps.taps1[ci])
                    sweep_acc(gp, gout.plane(b, m), H, W, 0, 0, w1.at(m, j, 0, 0));
            }
    }
}

template <typename T>
void relu_forward(Tensor<T>& out, const Tensor<T>& in) {
    for (int64_t i = 0; i < in.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& in) {
    for (int64_t i = 0; i < in.numel(); ++i)
        if (in[i] > T(0)) gin[i] += gout[i];
}

template <typename T>
void sigmoid_forward(Tensor<T>& out, const Tensor<T>& in) {
    for (int64_t i = 0; i < in.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
}

template <typename T>
void sigmoid_backward(Tensor<T>& gin, const Tensor<T>& gout, const Tensor<T>& out) {
    for (int64_t i = 0; i < out.numel(); ++i) gin[i] += gout[i] * out[i] * (T(1) - out[i]);
}

template <typename T>
void avg_pool2x2_forward(Tensor<T>& out, const Tensor<T>& in) {
    const Shape4 s = in.shape();
    const int64_t W = s.w, Ho = s.h / 2, Wo = s.w / 2;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            const T* ip = in.plane(b, c);
            T* op = out.plane(b, c);
            for (int64_t y = 0; y < Ho; ++y)
                for (int64_t x = 0; x < Wo; ++x) {
                    const T* r0 = ip + 2 * y * W + 2 * x;
                    op[y * Wo + x] = T(0.25) * (r0[0] + r0[1] + r0[W] + r0[W + 1]);
                }
        }
}

template <typename T>
void avg_pool2x2_backward(Tensor<T>& gin, const Tensor<T>& gout) {
    const Shape4 s = gin.shape();
    const int64_t W = s.w, Wo = s.w / 2;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            T* gp = gin.plane(b, c);
            const T* op = gout.plane(b, c);
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t x = 0; x < W; ++x)
                    gp[y * W + x] += T(0.25) * op[(y / 2) * Wo + x / 2];
        }
}

template <typename T>
void upsample2x_forward(Tensor<T>& out, const Tensor<T>& in) {
    const Shape4 s = in.shape();
    const int64_t H = s.h, W = s.w, Ho = 2 * H, Wo = 2 * W;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            const T* ip = in.plane(b, c);
            T* op = out.plane(b, c);
            for (int64_t Y = 0; Y < Ho; ++Y)
                for (int64_t X = 0; X < Wo; ++X)
                    op[Y * Wo + X] = tap_sample(ip, W, upsample_tap<T>(H, W, Y, X));
        }
}

template <typename T>
void upsample2x_backward(Tensor<T>& gin, const Tensor<T>& gout) {
    const Shape4 s = gin.shape();
    const int64_t H = s.h, W = s.w, Ho = 2 * H, Wo = 2 * W;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            T* gp = gin.plane(b, c);
            const T* op = gout.plane(b, c);
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) {
                    T acc = 0;
                    for (int64_t Y = std::max<int64_t>(0, 2 * y - 2);
                         Y < std::min(Ho, 2 * y + 4); ++Y)
                        for (int64_t X = std::max<int64_t>(0, 2 * x - 2);
                             X < std::min(Wo, 2 * x + 4); ++X) {
                            const Tap<T> t = upsample_tap<T>(H, W, Y, X);
                            const T wy = (t.y0 == y ? t.wy0 : T(0)) + (t.y1 == y ? t.wy1 : T(0));
                            const T wx = (t.x0 == x ? t.wx0 : T(0)) + (t.x1 == x ? t.wx1 : T(0));
                            acc += op[Y * Wo + X] * wy * wx;
                        }
                    gp[y * W + x] += acc;
                }
        }
}

template <typename T>
void warp_forward(Tensor<T>& out, const Tensor<T>& img, const Tensor<T>& flow) {
    const Shape4 s = img.shape();
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x) warp_pixel_forward(out, img, flow, b, y, x);
}

template <typename T>
void warp_backward(Tensor<T>* gimg, Tensor<T>* gflow, const Tensor<T>& gout, const Tensor<T>& img,
                   const Tensor<T>& flow) {
    const Shape4 s = img.shape();
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                warp_pixel_backward(gimg, gflow, gout, img, flow, b, y, x);
}

template <typename T>
void edsc_forward(Tensor<T>& out, const EdscArgs<T>& a) {
    const Shape4 s = a.I1->shape();
    T acc[16];
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x) {
                edsc_pixel_forward(acc, a, b, y, x);
                for (int64_t c = 0; c < s.c; ++c) out.plane(b, c)[y * s.w + x] = acc[c];
            }
}

template <typename T>
void edsc_backward(const EdscGrads<T>& g, const Tensor<T>& gout, const EdscArgs<T>& a) {
    const Shape4 s = a.I1->shape();
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                edsc_pixel_backward(g, g.I1, g.I2, gout, a, b, y, x);
}

#define EDSC_INSTANTIATE(T)                                                                       \
    template void conv2d_forward<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                    const Tensor<T>*);                                            \
    template void conv2d_backward<T>(Tensor<T>*, Tensor<T>*, Tensor<T>*, const Tensor<T>&,       \
                                     const Tensor<T>&, const Tensor<T>&);                         \
    template void hetconv2d_forward<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                       const Tensor<T>&, const Tensor<T>*);                       \
    template void hetconv2d_backward<T>(Tensor<T>*, Tensor<T>*, Tensor<T>*, Tensor<T>*,          \
                                        const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                        const Tensor<T>&);                                        \
    template void relu_forward<T>(Tensor<T>&, const Tensor<T>&);                                  \
    template void relu_backward<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
    template void sigmoid_forward<T>(Tensor<T>&, const Tensor<T>&);                               \
    template void sigmoid_backward<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
    template void avg_pool2x2_forward<T>(Tensor<T>&, const Tensor<T>&);                           \
    template void avg_pool2x2_backward<T>(Tensor<T>&, const Tensor<T>&);                          \
    template void upsample2x_forward<T>(Tensor<T>&, const Tensor<T>&);                            \
    template void upsample2x_backward<T>(Tensor<T>&, const Tensor<T>&);                           \
    template void warp_forward<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template void warp_backward<T>(Tensor<T>*, Tensor<T>*, const Tensor<T>&, const Tensor<T>&,   \
                                   const Tensor<T>&);                                             \
    template void edsc_forward<T>(Tensor<T>&, const EdscArgs<T>&);                                \
    template void edsc_backward<T>(const EdscGrads<T>&, const Tensor<T>&, const EdscArgs<T>&);

EDSC_INSTANTIATE(float)
EDSC_INSTANTIATE(double)

#undef EDSC_INSTANTIATE

}  // namespace edsc::kernels::serial
