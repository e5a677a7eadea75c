#include "edsc/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "edsc/common.hpp"
#include "edsc/rng.hpp"

namespace edsc {

namespace {

constexpr int64_t kBgCell = 4;   // background texture lattice cell, px
constexpr int64_t kOccCell = 4;  // occluder texture lattice cell, px

int64_t wrap(int64_t i, int64_t m) { return ((i % m) + m) % m; }
int64_t clampi(int64_t i, int64_t hi) { return i < 0 ? 0 : (i > hi ? hi : i); }
double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

// Smooth RGB texture: random values on a coarse lattice, bilinear in between.
// Background lattices tile (so any translation stays in range), occluder
// lattices clamp (a finite object).
struct Lattice {
    int64_t rows = 0, cols = 0;
    std::vector<double> v;  // [3][rows][cols]

    double at(int ch, int64_t i, int64_t j) const { return v[(ch * rows + i) * cols + j]; }

    double sample(int ch, double i, double j, bool tile) const {
        const double fi = std::floor(i), fj = std::floor(j);
        const double ai = i - fi, aj = j - fj;
        int64_t i0 = int64_t(fi), j0 = int64_t(fj), i1 = i0 + 1, j1 = j0 + 1;
        if (tile) {
            i0 = wrap(i0, rows), i1 = wrap(i1, rows);
            j0 = wrap(j0, cols), j1 = wrap(j1, cols);
        } else {
            i0 = clampi(i0, rows - 1), i1 = clampi(i1, rows - 1);
            j0 = clampi(j0, cols - 1), j1 = clampi(j1, cols - 1);
        }
        return (1 - ai) * ((1 - aj) * at(ch, i0, j0) + aj * at(ch, i0, j1)) +
               ai * ((1 - aj) * at(ch, i1, j0) + aj * at(ch, i1, j1));
    }
};

Lattice make_lattice(Rng& rng, int64_t rows, int64_t cols, double lo, double hi) {
    Lattice lat;
    lat.rows = rows;
    lat.cols = cols;
    lat.v.resize(size_t(3) * rows * cols);
    for (auto& x : lat.v) x = rng.uniform(lo, hi);
    return lat;
}

// Fraction of the unit pixel extent covered by [-S/2, S/2] at offset u.
double coverage(double u, double S) { return clamp01(S / 2 + 0.5 - std::abs(u)); }

}  // namespace

std::vector<double> sequence_times(int frame_count) {
    if (frame_count < 3)
        throw std::invalid_argument("a sequence needs at least 3 frames, got " +
                                    std::to_string(frame_count));
    if (frame_count == 7) return {0.0, 0.167, 0.333, 0.5, 0.667, 0.833, 1.0};
    std::vector<double> t(frame_count);
    for (int k = 0; k < frame_count; ++k)
        t[k] = k == frame_count - 1 ? 1.0 : double(k) / (frame_count - 1);
    return t;
}

std::pair<double, double> occ_center(const MotionSpec& spec, double t) {
    return {spec.occ_cy + t * spec.occ_vy, spec.occ_cx + t * spec.occ_vx};
}

SyntheticSequence gen_sequence(const MotionSpec& spec, uint64_t seed) {
    const int64_t H = spec.height, W = spec.width, S = spec.occ_size;
    if (H < 4 || W < 4)
        throw std::invalid_argument("frame size too small: " + std::to_string(H) + "x" +
                                    std::to_string(W));
    if (spec.with_occluder) {
        if (S < 2) throw std::invalid_argument("occluder smaller than 2 px");
        if (S > H || S > W)
            throw std::invalid_argument("occluder larger than the frame: " + std::to_string(S));
    }

    SyntheticSequence seq;
    seq.spec = spec;
    seq.times = sequence_times(spec.frame_count);

    Rng rng(seed);
    const Lattice bg = make_lattice(rng, (H + kBgCell - 1) / kBgCell,
                                    (W + kBgCell - 1) / kBgCell, 0.05, 0.6);
    Lattice occ;
    if (spec.with_occluder)
        occ = make_lattice(rng, S / kOccCell + 2, S / kOccCell + 2, 0.4, 0.95);

    for (const double t : seq.times) {
        Tensor<float> frame({1, 3, H, W});
        Tensor<float> alpha({1, 1, H, W});
        const auto [cy, cx] = occ_center(spec, t);
        const double th = spec.occ_spin * t;
        const double c = std::cos(th), s = std::sin(th);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double a = 0, qy = 0, qx = 0;
                if (spec.with_occluder) {
                    const double dy = y - cy, dx = x - cx;
                    qy = c * dy + s * dx;  // rotate by -th into object coords
                    qx = -s * dy + c * dx;
                    a = coverage(qy, double(S)) * coverage(qx, double(S));
                }
                alpha.plane(0, 0)[y * W + x] = float(a);
                for (int ch = 0; ch < 3; ++ch) {
                    const double b = bg.sample(ch, (y - t * spec.bg_vy) / kBgCell,
                                               (x - t * spec.bg_vx) / kBgCell, true);
                    double v = b;
                    if (a > 0) {
                        const double o = occ.sample(ch, (qy + S / 2.0) / kOccCell,
                                                    (qx + S / 2.0) / kOccCell, false);
                        v = (1 - a) * b + a * o;
                    }
                    frame.plane(0, ch)[y * W + x] = float(v);
                }
            }
        seq.frames.push_back(std::move(frame));
        if (spec.with_occluder) seq.occ_alpha.push_back(std::move(alpha));
    }

    // Flow from the first frame to the last: the rigid occluder field where
    // coverage exceeds one half, the background translation elsewhere.
    seq.gt_flow = Tensor<float>({1, 2, H, W});
    const double c1 = std::cos(spec.occ_spin), s1 = std::sin(spec.occ_spin);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            double fy = spec.bg_vy, fx = spec.bg_vx;
            if (spec.with_occluder &&
                seq.occ_alpha.front().plane(0, 0)[y * W + x] > 0.5f) {
                const double qy = y - spec.occ_cy, qx = x - spec.occ_cx;
                fy = spec.occ_vy + (c1 * qy - s1 * qx) - qy;
                fx = spec.occ_vx + (s1 * qy + c1 * qx) - qx;
            }
            seq.gt_flow.plane(0, 0)[y * W + x] = float(fy);
            seq.gt_flow.plane(0, 1)[y * W + x] = float(fx);
        }
    return seq;
}

}  // namespace edsc
