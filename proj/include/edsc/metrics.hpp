#pragma once

#include <cstdint>
#include <vector>

#include "edsc/tensor.hpp"

namespace edsc {

// Evaluation metrics over [0,1]-range images. Error magnitudes are reported
// on the 0..255 scale as is conventional for interpolation error.

// 10*log10(peak^2 / MSE), capped at 99 dB (identical images hit the cap).
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, double peak = 1.0);

// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1. Windows are fully inside the image (no padding); the map
// is averaged over valid positions, channels and batch entries. Computed per
// color channel and averaged. Needs H,W >= 11.
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& gt);

// 255 * sqrt(mean((pred-gt)^2)).
template <typename T>
double interpolation_error(const Tensor<T>& pred, const Tensor<T>& gt);

// Brightness-constancy occlusion estimate: d = per-pixel channel L2 norm of
// I1 - backward_warp(I2, flow); a pixel is occluded iff d >= mean(d). The
// degenerate constant-frame case marks everything occluded.
struct OcclusionMask {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> occluded;  // row-major H*W, 1 = occluded
    int64_t count() const;
};

template <typename T>
OcclusionMask occlusion_mask(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& flow);

// RMSE (0..255 scale) over the masked pixels, each contributing its C channel
// differences; normalization is N_masked * C so partitions recombine exactly.
// Throws DataError when the mask selects nothing.
template <typename T>
double ie_masked(const Tensor<T>& pred, const Tensor<T>& gt, const std::vector<uint8_t>& mask);

template <typename T>
double ie_occluded(const Tensor<T>& pred, const Tensor<T>& gt, const OcclusionMask& mask);

// RMSE over the band within `width` pixels of any image edge.
template <typename T>
double ie_boundary(const Tensor<T>& pred, const Tensor<T>& gt, int width = 10);

}  // namespace edsc
