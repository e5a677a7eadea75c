#include "edsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edsc/common.hpp"
#include "edsc/kernels.hpp"

namespace edsc {

namespace {

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    require_shape(b, a.shape(), "gt");
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return s / double(a.numel());
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kSsimWindow * kSsimWindow);
        const int r = kSsimWindow / 2;
        double sum = 0;
        for (int i = 0; i < kSsimWindow; ++i)
            for (int j = 0; j < kSsimWindow; ++j) {
                const double dy = i - r, dx = j - r;
                v[i * kSsimWindow + j] =
                    std::exp(-(dy * dy + dx * dx) / (2 * kSsimSigma * kSsimSigma));
                sum += v[i * kSsimWindow + j];
            }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, double peak) {
    const double m = mse(pred, gt);
    if (m == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(peak * peak / m));
}

template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& gt) {
    require_shape(gt, pred.shape(), "gt");
    const Shape4 s = pred.shape();
    if (s.h < kSsimWindow || s.w < kSsimWindow)
        throw std::invalid_argument("ssim needs at least 11x11 images, got " + s.str());
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    const std::vector<double>& win = ssim_window();

    double total = 0;
    int64_t windows = 0;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            const T* x = pred.plane(b, c);
            const T* y = gt.plane(b, c);
            for (int64_t oy = 0; oy + kSsimWindow <= s.h; ++oy)
                for (int64_t ox = 0; ox + kSsimWindow <= s.w; ++ox) {
                    double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                    for (int i = 0; i < kSsimWindow; ++i)
                        for (int j = 0; j < kSsimWindow; ++j) {
                            const double w = win[i * kSsimWindow + j];
                            const double px = x[(oy + i) * s.w + ox + j];
                            const double py = y[(oy + i) * s.w + ox + j];
                            mx += w * px;
                            my += w * py;
                            xx += w * px * px;
                            yy += w * py * py;
                            xy += w * px * py;
                        }
                    const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
                    total += ((2 * mx * my + C1) * (2 * cov + C2)) /
                             ((mx * mx + my * my + C1) * (vx + vy + C2));
                    ++windows;
                }
        }
    return total / double(windows);
}

template <typename T>
double interpolation_error(const Tensor<T>& pred, const Tensor<T>& gt) {
    return 255.0 * std::sqrt(mse(pred, gt));
}

int64_t OcclusionMask::count() const {
    return std::count(occluded.begin(), occluded.end(), uint8_t(1));
}

template <typename T>
OcclusionMask occlusion_mask(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& flow) {
    require_shape(I2, I1.shape(), "I2");
    const Shape4 s = I1.shape();
    if (s.b != 1) throw std::invalid_argument("occlusion mask works on single images");
    Tensor<T> warped;
    kernels::warp_forward(warped, I2, flow);

    const int64_t HW = s.h * s.w;
    std::vector<double> d(HW, 0.0);
    for (int64_t c = 0; c < s.c; ++c) {
        const T* a = I1.plane(0, c);
        const T* b = warped.plane(0, c);
        for (int64_t i = 0; i < HW; ++i) {
            const double diff = double(a[i]) - double(b[i]);
            d[i] += diff * diff;
        }
    }
    double mean = 0;
    for (int64_t i = 0; i < HW; ++i) {
        d[i] = std::sqrt(d[i]);
        mean += d[i];
    }
    mean /= double(HW);

    OcclusionMask m;
    m.h = s.h;
    m.w = s.w;
    m.occluded.resize(HW);
    for (int64_t i = 0; i < HW; ++i) m.occluded[i] = d[i] >= mean ? 1 : 0;
    return m;
}

template <typename T>
double ie_masked(const Tensor<T>& pred, const Tensor<T>& gt, const std::vector<uint8_t>& mask) {
    require_shape(gt, pred.shape(), "gt");
    const Shape4 s = pred.shape();
    if (s.b != 1) throw std::invalid_argument("masked error works on single images");
    if (static_cast<int64_t>(mask.size()) != s.h * s.w)
        throw std::invalid_argument("mask size does not match image");
    int64_t n = 0;
    for (int64_t i = 0; i < s.h * s.w; ++i)
        if (mask[i]) ++n;
    if (n == 0) throw DataError("no pixels selected by the mask");
    // channel-major accumulation, the same element order mse uses, so a
    // full-coverage mask reproduces the global error bit for bit
    double sum = 0;
    for (int64_t c = 0; c < s.c; ++c) {
        const T* p = pred.plane(0, c);
        const T* g = gt.plane(0, c);
        for (int64_t i = 0; i < s.h * s.w; ++i) {
            if (!mask[i]) continue;
            const double diff = double(p[i]) - double(g[i]);
            sum += diff * diff;
        }
    }
    return 255.0 * std::sqrt(sum / double(n * s.c));
}

template <typename T>
double ie_occluded(const Tensor<T>& pred, const Tensor<T>& gt, const OcclusionMask& mask) {
    return ie_masked(pred, gt, mask.occluded);
}

template <typename T>
double ie_boundary(const Tensor<T>& pred, const Tensor<T>& gt, int width) {
    const Shape4 s = pred.shape();
    if (width < 1) throw std::invalid_argument("boundary width must be positive");
    std::vector<uint8_t> band(size_t(s.h) * s.w);
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
            band[y * s.w + x] =
                (y < width || y >= s.h - width || x < width || x >= s.w - width) ? 1 : 0;
    return ie_masked(pred, gt, band);
}

#define EDSC_METRICS_INSTANTIATE(T)                                                         \
    template double psnr<T>(const Tensor<T>&, const Tensor<T>&, double);                    \
    template double ssim<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template double interpolation_error<T>(const Tensor<T>&, const Tensor<T>&);             \
    template OcclusionMask occlusion_mask<T>(const Tensor<T>&, const Tensor<T>&,            \
                                             const Tensor<T>&);                             \
    template double ie_masked<T>(const Tensor<T>&, const Tensor<T>&,                        \
                                 const std::vector<uint8_t>&);                              \
    template double ie_occluded<T>(const Tensor<T>&, const Tensor<T>&, const OcclusionMask&); \
    template double ie_boundary<T>(const Tensor<T>&, const Tensor<T>&, int);

EDSC_METRICS_INSTANTIATE(float)
EDSC_METRICS_INSTANTIATE(double)

#undef EDSC_METRICS_INSTANTIATE

}  // namespace edsc
