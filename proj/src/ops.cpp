#include "edsc/ops.hpp"

#include <cmath>

namespace edsc {

namespace {

template <typename T>
Tape<T>& tape_of(std::initializer_list<Var<T>> vars) {
    Tape<T>* t = nullptr;
    for (const Var<T>& v : vars) {
        if (!v.valid()) continue;
        if (!t)
            t = &v.tape();
        else if (t != &v.tape())
            throw std::invalid_argument("op inputs come from different tapes");
    }
    if (!t) throw std::invalid_argument("op needs at least one valid input");
    return *t;
}

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vars) {
    for (const Var<T>& v : vars)
        if (v.valid() && v.requires_grad()) return true;
    return false;
}

template <typename T>
Tensor<T>* grad_or_null(Var<T> v) {
    return v.valid() && v.requires_grad() ? v.grad_ptr() : nullptr;
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b) {
    Tape<T>& t = tape_of<T>({x, w, b});
    Tensor<T> out;
    kernels::conv2d_forward(out, x.value(), w.value(), b.valid() ? &b.value() : nullptr);
    const bool rg = any_grad<T>({x, w, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([gx = grad_or_null(x), gw = grad_or_null(w), gb = grad_or_null(b),
                     gy = y.grad_ptr(), px = x.value_ptr(), pw = w.value_ptr()] {
            kernels::conv2d_backward(gx, gw, gb, *gy, *px, *pw);
        });
    return y;
}

template <typename T>
Var<T> hetconv2d(Var<T> x, Var<T> w3, Var<T> w1, Var<T> b) {
    Tape<T>& t = tape_of<T>({x, w3, w1, b});
    Tensor<T> out;
    kernels::hetconv2d_forward(out, x.value(), w3.value(), w1.value(),
                               b.valid() ? &b.value() : nullptr);
    const bool rg = any_grad<T>({x, w3, w1, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([gx = grad_or_null(x), gw3 = grad_or_null(w3), gw1 = grad_or_null(w1),
                     gb = grad_or_null(b), gy = y.grad_ptr(), px = x.value_ptr(),
                     pw3 = w3.value_ptr(), pw1 = w1.value_ptr()] {
            kernels::hetconv2d_backward(gx, gw3, gw1, gb, *gy, *px, *pw3, *pw1);
        });
    return y;
}

template <typename T>
Var<T> relu(Var<T> x) {
    Tape<T>& t = x.tape();
    Tensor<T> out;
    kernels::relu_forward(out, x.value());
    Var<T> y = t.intermediate(std::move(out), x.requires_grad());
    if (x.requires_grad())
        t.push_node([gx = x.grad_ptr(), gy = y.grad_ptr(), px = x.value_ptr()] {
            kernels::relu_backward(*gx, *gy, *px);
        });
    return y;
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
    Tape<T>& t = x.tape();
    Tensor<T> out;
    kernels::sigmoid_forward(out, x.value());
    Var<T> y = t.intermediate(std::move(out), x.requires_grad());
    if (x.requires_grad())
        t.push_node([gx = x.grad_ptr(), gy = y.grad_ptr(), py = y.value_ptr()] {
            kernels::sigmoid_backward(*gx, *gy, *py);
        });
    return y;
}

template <typename T>
Var<T> avg_pool2x2(Var<T> x) {
    Tape<T>& t = x.tape();
    Tensor<T> out;
    kernels::avg_pool2x2_forward(out, x.value());
    Var<T> y = t.intermediate(std::move(out), x.requires_grad());
    if (x.requires_grad())
        t.push_node([gx = x.grad_ptr(), gy = y.grad_ptr()] {
            kernels::avg_pool2x2_backward(*gx, *gy);
        });
    return y;
}

template <typename T>
Var<T> upsample_bilinear2x(Var<T> x) {
    Tape<T>& t = x.tape();
    Tensor<T> out;
    kernels::upsample2x_forward(out, x.value());
    Var<T> y = t.intermediate(std::move(out), x.requires_grad());
    if (x.requires_grad())
        t.push_node([gx = x.grad_ptr(), gy = y.grad_ptr()] {
            kernels::upsample2x_backward(*gx, *gy);
        });
    return y;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& t = tape_of<T>({a, b});
    require_shape(b.value(), a.value().shape(), "add");
    Tensor<T> out(a.value().shape());
    const Tensor<T>&av = a.value(), &bv = b.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    const bool rg = any_grad<T>({a, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([ga = grad_or_null(a), gb = grad_or_null(b), gy = y.grad_ptr()] {
            for (int64_t i = 0; i < gy->numel(); ++i) {
                if (ga) (*ga)[i] += (*gy)[i];
                if (gb) (*gb)[i] += (*gy)[i];
            }
        });
    return y;
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels needs inputs");
    Tape<T>& t = xs[0].tape();
    const Shape4 s0 = xs[0].value().shape();
    int64_t ctot = 0;
    for (const auto& x : xs) {
        const Shape4 s = x.value().shape();
        if (s.b != s0.b || s.h != s0.h || s.w != s0.w)
            throw std::invalid_argument("concat_channels spatial/batch mismatch: " + s0.str() +
                                        " vs " + s.str());
        if (&x.tape() != &t) throw std::invalid_argument("concat inputs from different tapes");
        ctot += s.c;
    }
    Tensor<T> out({s0.b, ctot, s0.h, s0.w});
    const int64_t HW = s0.h * s0.w;
    bool rg = false;
    for (int64_t b = 0; b < s0.b; ++b) {
        int64_t co = 0;
        for (const auto& x : xs) {
            const Tensor<T>& xv = x.value();
            for (int64_t c = 0; c < xv.shape().c; ++c, ++co)
                std::copy(xv.plane(b, c), xv.plane(b, c) + HW, out.plane(b, co));
        }
    }
    for (const auto& x : xs) rg = rg || x.requires_grad();
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg) {
        std::vector<Tensor<T>*> gxs;
        std::vector<int64_t> chans;
        for (const auto& x : xs) {
            gxs.push_back(grad_or_null(x));
            chans.push_back(x.value().shape().c);
        }
        t.push_node([gxs, chans, gy = y.grad_ptr(), B = s0.b, HW] {
            for (int64_t b = 0; b < B; ++b) {
                int64_t co = 0;
                for (size_t k = 0; k < gxs.size(); ++k) {
                    for (int64_t c = 0; c < chans[k]; ++c, ++co) {
                        if (!gxs[k]) continue;
                        const T* src = gy->plane(b, co);
                        T* dst = gxs[k]->plane(b, c);
                        for (int64_t i = 0; i < HW; ++i) dst[i] += src[i];
                    }
                }
            }
        });
    }
    return y;
}

template <typename T>
Var<T> warp(Var<T> img, Var<T> flow) {
    Tape<T>& t = tape_of<T>({img, flow});
    Tensor<T> out;
    kernels::warp_forward(out, img.value(), flow.value());
    const bool rg = any_grad<T>({img, flow});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([gi = grad_or_null(img), gf = grad_or_null(flow), gy = y.grad_ptr(),
                     pi = img.value_ptr(), pf = flow.value_ptr()] {
            kernels::warp_backward(gi, gf, *gy, *pi, *pf);
        });
    return y;
}

template <typename T>
Var<T> edsc_apply(const EdscVars<T>& v) {
    Tape<T>& t = tape_of<T>({v.I1, v.I2, v.kv1, v.kh1, v.kv2, v.kh2, v.off1, v.off2, v.m1, v.m2,
                             v.db});
    kernels::EdscArgs<T> args{&v.I1.value(),
                              &v.I2.value(),
                              &v.kv1.value(),
                              &v.kh1.value(),
                              &v.kv2.value(),
                              &v.kh2.value(),
                              &v.off1.value(),
                              &v.off2.value(),
                              v.m1.valid() ? &v.m1.value() : nullptr,
                              v.m2.valid() ? &v.m2.value() : nullptr,
                              v.db.valid() ? &v.db.value() : nullptr,
                              v.n};
    Tensor<T> out;
    kernels::edsc_forward(out, args);
    const bool rg =
        any_grad<T>({v.I1, v.I2, v.kv1, v.kh1, v.kv2, v.kh2, v.off1, v.off2, v.m1, v.m2, v.db});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([v, args, gy = y.grad_ptr()] {
            kernels::EdscGrads<T> g;
            g.I1 = grad_or_null(v.I1);
            g.I2 = grad_or_null(v.I2);
            g.kv1 = grad_or_null(v.kv1);
            g.kh1 = grad_or_null(v.kh1);
            g.kv2 = grad_or_null(v.kv2);
            g.kh2 = grad_or_null(v.kh2);
            g.off1 = grad_or_null(v.off1);
            g.off2 = grad_or_null(v.off2);
            g.m1 = grad_or_null(v.m1);
            g.m2 = grad_or_null(v.m2);
            g.db = grad_or_null(v.db);
            kernels::edsc_backward(g, *gy, args);
        });
    return y;
}

template <typename T>
Var<T> charbonnier_loss(Var<T> a, Var<T> b, T eps) {
    Tape<T>& t = tape_of<T>({a, b});
    require_shape(b.value(), a.value().shape(), "charbonnier_loss");
    const Tensor<T>&av = a.value(), &bv = b.value();
    const int64_t N = av.numel();
    T acc = 0;
    for (int64_t i = 0; i < N; ++i) {
        const T d = av[i] - bv[i];
        acc += std::sqrt(d * d + eps * eps);
    }
    Tensor<T> out({1, 1, 1, 1});
    out[0] = acc / T(N);
    const bool rg = any_grad<T>({a, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([ga = grad_or_null(a), gb = grad_or_null(b), gy = y.grad_ptr(),
                     pa = a.value_ptr(), pb = b.value_ptr(), eps, N] {
            const T go = (*gy)[0] / T(N);
            for (int64_t i = 0; i < N; ++i) {
                const T d = (*pa)[i] - (*pb)[i];
                const T g = go * d / std::sqrt(d * d + eps * eps);
                if (ga) (*ga)[i] += g;
                if (gb) (*gb)[i] -= g;
            }
        });
    return y;
}

template <typename T>
Var<T> mse_loss(Var<T> a, Var<T> b) {
    Tape<T>& t = tape_of<T>({a, b});
    require_shape(b.value(), a.value().shape(), "mse_loss");
    const Tensor<T>&av = a.value(), &bv = b.value();
    const int64_t N = av.numel();
    T acc = 0;
    for (int64_t i = 0; i < N; ++i) {
        const T d = av[i] - bv[i];
        acc += d * d;
    }
    Tensor<T> out({1, 1, 1, 1});
    out[0] = acc / T(N);
    const bool rg = any_grad<T>({a, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([ga = grad_or_null(a), gb = grad_or_null(b), gy = y.grad_ptr(),
                     pa = a.value_ptr(), pb = b.value_ptr(), N] {
            const T go = (*gy)[0] * T(2) / T(N);
            for (int64_t i = 0; i < N; ++i) {
                const T g = go * ((*pa)[i] - (*pb)[i]);
                if (ga) (*ga)[i] += g;
                if (gb) (*gb)[i] -= g;
            }
        });
    return y;
}

template <typename T>
Var<T> add_scaled(Var<T> a, Var<T> b, T s) {
    Tape<T>& t = tape_of<T>({a, b});
    require_shape(b.value(), a.value().shape(), "add_scaled");
    Tensor<T> out(a.value().shape());
    const Tensor<T>&av = a.value(), &bv = b.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + s * bv[i];
    const bool rg = any_grad<T>({a, b});
    Var<T> y = t.intermediate(std::move(out), rg);
    if (rg)
        t.push_node([ga = grad_or_null(a), gb = grad_or_null(b), gy = y.grad_ptr(), s] {
            for (int64_t i = 0; i < gy->numel(); ++i) {
                if (ga) (*ga)[i] += (*gy)[i];
                if (gb) (*gb)[i] += s * (*gy)[i];
            }
        });
    return y;
}

#define EDSC_INSTANTIATE(T)                                                       \
    template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>);                            \
    template Var<T> hetconv2d<T>(Var<T>, Var<T>, Var<T>, Var<T>);                 \
    template Var<T> relu<T>(Var<T>);                                              \
    template Var<T> sigmoid<T>(Var<T>);                                           \
    template Var<T> avg_pool2x2<T>(Var<T>);                                       \
    template Var<T> upsample_bilinear2x<T>(Var<T>);                               \
    template Var<T> add<T>(Var<T>, Var<T>);                                       \
    template Var<T> concat_channels<T>(const std::vector<Var<T>>&);               \
    template Var<T> warp<T>(Var<T>, Var<T>);                                      \
    template Var<T> edsc_apply<T>(const EdscVars<T>&);                                  \
    template Var<T> charbonnier_loss<T>(Var<T>, Var<T>, T);                       \
    template Var<T> mse_loss<T>(Var<T>, Var<T>);                                  \
    template Var<T> add_scaled<T>(Var<T>, Var<T>, T);

EDSC_INSTANTIATE(float)
EDSC_INSTANTIATE(double)

#undef EDSC_INSTANTIATE

}  // namespace edsc
