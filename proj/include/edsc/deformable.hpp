#pragma once

#include <utility>

#include "edsc/kernels.hpp"
#include "edsc/tensor.hpp"

namespace edsc {

// Two-frame deformable separable synthesis (functional, no autodiff):
//   out(c,p) = sum_j kv1[j/n] kh1[j%n] m1[j] I1(c, p + r_j + dp1_j)
//            + sum_j kv2[j/n] kh2[j%n] m2[j] I2(c, p + r_j + dp2_j) + db(c,p)
// where r_j walks the regular n x n grid row-major, spanning
// -(n-1)/2 .. (n-1)/2, and sampling is bilinear with replicate borders.
// off* is [B,2n^2,H,W]: n^2 dy channels then n^2 dx channels. masks and bias
// may be null (ones / zero).
template <typename T>
Tensor<T> edsc_forward(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& kv1,
                       const Tensor<T>& kh1, const Tensor<T>& kv2, const Tensor<T>& kh2,
                       const Tensor<T>& off1, const Tensor<T>& off2, const Tensor<T>* m1,
                       const Tensor<T>* m2, const Tensor<T>* db, int n);

// Adaptive separable convolution over the regular grid only: the special case
// of the deformable op with zero offsets, unit masks and no bias. Implemented
// independently (integer-grid reads), serving as the reduction oracle.
template <typename T>
Tensor<T> sepconv_reference(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& kv1,
                            const Tensor<T>& kh1, const Tensor<T>& kv2, const Tensor<T>& kh2,
                            int n);

// The n=1 case: each frame contributes one scalar weight field and one flow
// field, i.e. attention-blended backward warping,
//   out = w1 * warp(I1, f1) + w2 * warp(I2, f2).
template <typename T>
Tensor<T> flow_mode(const Tensor<T>& I1, const Tensor<T>& I2, const Tensor<T>& w1,
                    const Tensor<T>& w2, const Tensor<T>& f1, const Tensor<T>& f2);

// Baseline for arbitrary-time synthesis from a midpoint-trained model: scale
// the frame-1 offsets by t/0.5 and the frame-2 offsets by (1-t)/0.5. Kept as
// the comparison point showing why the control channel is needed.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> naive_time_rescale(const Tensor<T>& off1, const Tensor<T>& off2,
                                                   T t);

// Where one frame's synthesis mass actually lands: splats |kv kh m| onto the
// bilinear corners of every sampled position. Returns [B,1,H,W]; total mass
// equals sum |kv[j/n] kh[j%n] m[j]| exactly (replicate clamping keeps every
// corner on the grid).
template <typename T>
Tensor<T> effective_sampling_map(const Tensor<T>& kv, const Tensor<T>& kh, const Tensor<T>* m,
                                 const Tensor<T>& off, int n);

}  // namespace edsc
