#pragma once

#include <string>

#include "edsc/tensor.hpp"

namespace edsc {

// Point sample with bilinear interpolation and replicate borders. Coordinates
// are in pixel units, (y, x), origin at the center of the top-left pixel.
// At integer coordinates this returns the pixel value exactly.
template <typename T>
T bilinear_sample(const Tensor<T>& img, int64_t b, int64_t c, T y, T x);

// Backward warp: out(b,c,y,x) = img sampled at (y + flow[0], x + flow[1]).
// flow is [B,2,H,W], channel 0 vertical (dy), channel 1 horizontal (dx).
template <typename T>
Tensor<T> flow_warp(const Tensor<T>& img, const Tensor<T>& flow);

// The same map written as a per-pixel 2x2 convolution stencil: the stencil is
// placed at the integer part of the flow and its four weights come from the
// fractional parts, so an integer flow degenerates to a one-hot kernel.
// Agrees with flow_warp to rounding; exists to pin down that warping is a
// special case of per-pixel convolution.
template <typename T>
Tensor<T> flow_as_conv(const Tensor<T>& img, const Tensor<T>& flow);

// FLO1 flow file: magic "FLO1", u32 height, u32 width (little endian), then
// row-major float32 (dy, dx) pairs. Returns [1,2,H,W].
Tensor<float> read_flo1(const std::string& path);
void write_flo1(const std::string& path, const Tensor<float>& flow);

}  // namespace edsc
