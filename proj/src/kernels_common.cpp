#include <cmath>

#include "edsc/kernels.hpp"

namespace edsc::kernels {

template <typename T>
void check_conv2d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias) {
    const Shape4 ws = w.shape();
    if (ws.h != ws.w || ws.h % 2 == 0)
        throw std::invalid_argument("conv2d kernel must be square with odd size, got " + ws.str());
    if (ws.c != in.shape().c)
        throw std::invalid_argument("conv2d weight expects " + std::to_string(ws.c) +
                                    " input channels, input has " + std::to_string(in.shape().c));
    if (bias && !(bias->shape() == Shape4{1, ws.b, 1, 1}))
        throw std::invalid_argument("conv2d bias shape " + bias->shape().str() +
                                    " does not match " + std::to_string(ws.b) + " filters");
}

template <typename T>
void check_hetconv2d(const Tensor<T>& in, const Tensor<T>& w3, const Tensor<T>& w1,
                     const Tensor<T>* bias) {
    const Shape4 s3 = w3.shape(), s1 = w1.shape();
    if (s3.h != 3 || s3.w != 3)
        throw std::invalid_argument("hetconv2d 3x3 weight has shape " + s3.str());
    if (s1.h != 1 || s1.w != 1 || s1.b != s3.b)
        throw std::invalid_argument("hetconv2d 1x1 weight has shape " + s1.str());
    if (s3.c < 1) throw std::invalid_argument("hetconv2d needs at least one 3x3 channel");
    if (s3.c + s1.c != in.shape().c)
        throw std::invalid_argument("hetconv2d weights cover " + std::to_string(s3.c + s1.c) +
                                    " channels, input has " + std::to_string(in.shape().c));
    if (bias && !(bias->shape() == Shape4{1, s3.b, 1, 1}))
        throw std::invalid_argument("hetconv2d bias shape " + bias->shape().str() +
                                    " does not match " + std::to_string(s3.b) + " filters");
}

template <typename T>
void check_warp(const Tensor<T>& img, const Tensor<T>& flow) {
    const Shape4 fs = flow.shape(), is = img.shape();
    if (fs.c != 2 || fs.b != is.b || fs.h != is.h || fs.w != is.w)
        throw std::invalid_argument("flow shape " + fs.str() +
                                    " does not match image " + is.str() +
                                    " (want [B,2,H,W] with dy then dx channels)");
}

template <typename T>
void check_edsc(const EdscArgs<T>& a) {
    if (!a.I1 || !a.I2 || !a.kv1 || !a.kh1 || !a.kv2 || !a.kh2 || !a.off1 || !a.off2)
        throw std::invalid_argument("deformable op is missing a required input");
    const int n = a.n;
    if (n < 1 || n % 2 == 0 || n > kMaxKernelEdge)
        throw std::invalid_argument("kernel edge must be odd, in [1," +
                                    std::to_string(kMaxKernelEdge) + "], got " +
                                    std::to_string(n));
    const Shape4 is = a.I1->shape();
    if (is.c > 16)
        throw std::invalid_argument("deformable op supports at most 16 channels, got " +
                                    std::to_string(is.c));
    if (!(a.I2->shape() == is))
        throw std::invalid_argument("frame shapes differ: " + is.str() + " vs " +
                                    a.I2->shape().str());
    const int64_t n2 = int64_t(n) * n;
    const Shape4 ks{is.b, n, is.h, is.w}, os{is.b, 2 * n2, is.h, is.w}, ms{is.b, n2, is.h, is.w};
    require_shape(*a.kv1, ks, "vertical kernel (frame 1)");
    require_shape(*a.kh1, ks, "horizontal kernel (frame 1)");
    require_shape(*a.kv2, ks, "vertical kernel (frame 2)");
    require_shape(*a.kh2, ks, "horizontal kernel (frame 2)");
    require_shape(*a.off1, os, "offsets (frame 1)");
    require_shape(*a.off2, os, "offsets (frame 2)");
    if (a.m1) require_shape(*a.m1, ms, "mask (frame 1)");
    if (a.m2) require_shape(*a.m2, ms, "mask (frame 2)");
    if (a.db) require_shape(*a.db, is, "residual bias");
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

#define EDSC_INSTANTIATE(T)                                                                   \
    template void check_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);      \
    template void check_hetconv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                     const Tensor<T>*);                                       \
    template void check_warp<T>(const Tensor<T>&, const Tensor<T>&);                          \
    template void check_edsc<T>(const EdscArgs<T>&);                                          \
    template bool all_finite<T>(const Tensor<T>&);

EDSC_INSTANTIATE(float)
EDSC_INSTANTIATE(double)

#undef EDSC_INSTANTIATE

}  // namespace edsc::kernels
