#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "edsc/tensor.hpp"

namespace edsc {

// A rigid scene: a smoothly textured background translating at (bg_vy, bg_vx)
// px over the whole [0,1] interval, optionally covered by a textured square
// occluder that translates (and can spin about its own center) over the same
// interval. Everything is rendered from continuous texture lattices, so
// brightness constancy holds away from the occlusion boundary.
struct MotionSpec {
    int64_t height = 64, width = 64;
    int frame_count = 7;  // >= 3; 7 selects the published time steps
    double bg_vy = 0, bg_vx = 0;
    bool with_occluder = false;
    int64_t occ_size = 16;          // square side in px
    double occ_cy = 0, occ_cx = 0;  // occluder center at t = 0
    double occ_vy = 0, occ_vx = 0;  // center displacement over the interval
    double occ_spin = 0;            // rotation over the interval, radians
};

struct SyntheticSequence {
    MotionSpec spec;
    std::vector<double> times;          // ascending, 0 first, 1 last
    std::vector<Tensor<float>> frames;  // [1,3,H,W] each, values inside [0,1]
    // Per-frame occluder coverage in [0,1] ([1,1,H,W]); empty when the spec
    // has no occluder.
    std::vector<Tensor<float>> occ_alpha;
    Tensor<float> gt_flow;  // [1,2,H,W], first frame to last, (dy, dx)
};

// Frame times: 7 gives {0, 0.167, 0.333, 0.5, 0.667, 0.833, 1}, any other
// count spreads evenly over [0,1]. Throws below 3 frames.
std::vector<double> sequence_times(int frame_count);

// Occluder center at time t; affine in t by construction.
std::pair<double, double> occ_center(const MotionSpec& spec, double t);

// Deterministic under (spec, seed). The background texture depends only on
// the seed and frame size, not on the occluder, so a second run without the
// occluder reproduces the clean background plates.
// Throws std::invalid_argument for bad counts or an occluder larger than the
// frame.
SyntheticSequence gen_sequence(const MotionSpec& spec, uint64_t seed);

}  // namespace edsc
