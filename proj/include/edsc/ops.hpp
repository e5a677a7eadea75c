#pragma once

#include <vector>

#include "edsc/autodiff.hpp"
#include "edsc/kernels.hpp"

// Differentiable ops over tape vars. Each wraps the corresponding raw kernel
// and records a backward closure. All inputs of one op must share a tape.
namespace edsc {

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b);

// Mixed-kernel conv: w3 holds the 3x3 weights [Cout, ceil(Cin/P), 3, 3], w1
// the 1x1 weights [Cout, Cin - ceil(Cin/P), 1, 1].
template <typename T>
Var<T> hetconv2d(Var<T> x, Var<T> w3, Var<T> w1, Var<T> b);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> avg_pool2x2(Var<T> x);
template <typename T>
Var<T> upsample_bilinear2x(Var<T> x);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

// Backward warp: out(y,x) = image sampled at (y + flow[0], x + flow[1]).
template <typename T>
Var<T> warp(Var<T> img, Var<T> flow);

// Deformable separable synthesis from two frames. mask1/mask2/bias may be
// absent (default Var), acting as ones / zero.
template <typename T>
struct EdscVars {
    Var<T> I1, I2;
    Var<T> kv1, kh1, kv2, kh2;
    Var<T> off1, off2;
    Var<T> m1, m2;
    Var<T> db;
    int n = 0;
};

template <typename T>
Var<T> edsc_apply(const EdscVars<T>& v);

// mean over elements of sqrt((a-b)^2 + eps^2)
template <typename T>
Var<T> charbonnier_loss(Var<T> a, Var<T> b, T eps);

// mean over elements of (a-b)^2
template <typename T>
Var<T> mse_loss(Var<T> a, Var<T> b);

// scalar graph arithmetic: a + s*b
template <typename T>
Var<T> add_scaled(Var<T> a, Var<T> b, T s);

}  // namespace edsc
