#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edsc/autodiff.hpp"
#include "edsc/rng.hpp"
#include "edsc/tensor.hpp"

namespace edsc {

// The synthesis network: a mixed-kernel U-Net over the concatenated input
// frames, feeding per-output-field estimator subnets whose predictions drive
// the deformable separable synthesis op.
struct ModelConfig {
    int kernel_size = 5;  // n, odd, <= kernels::kMaxKernelEdge
    int hetconv_p = 4;    // mixed-conv part count P; each layer uses min(P, Cin)
    std::vector<int> widths = {16, 32, 64, 128};  // encoder level widths
    std::vector<int> est_widths = {32, 16, 16};   // estimator trunk widths
    bool multi_time = false;                      // temporal control channel
    bool use_mask = true;
    bool use_bias = true;
};

// Desk-scale configs train in minutes on a CPU; the full-scale config exists
// for cost reporting and follows the lineage the architecture inherits.
ModelConfig full_scale_config();

void validate(const ModelConfig& c);  // throws std::invalid_argument

// One conv layer, planned from the config alone. The builder and the cost
// model both walk this list, so counted shapes are the built shapes.
struct LayerSpec {
    std::string name;
    int64_t cin = 0, cout = 0;
    bool het = false;        // mixed 3x3/1x1 layer (encoder-decoder body)
    int64_t c3 = 0;          // 3x3 input channels per filter when het
    int res_div = 1;         // runs at (H/res_div, W/res_div)
    bool zero_init = false;  // offset estimator finals start at zero
};

std::vector<LayerSpec> plan_layers(const ModelConfig& c);

// weights only (the 1/3 mixed-vs-full ratios are exact on these); params adds
// the bias vector; macs multiply-accumulates at the layer's resolution.
int64_t layer_weight_count(const LayerSpec& l);
int64_t layer_param_count(const LayerSpec& l);
int64_t layer_macs(const LayerSpec& l, int64_t H, int64_t W);

int64_t count_params(const ModelConfig& c);
// 2 * MACs of the conv layers at input resolution H x W. Elementwise ops,
// pooling, upsampling and the synthesis op are excluded from the convention.
int64_t count_flops(const ModelConfig& c, int64_t H, int64_t W);

template <typename T>
struct Model {
    ModelConfig config;
    std::map<std::string, Tensor<T>> params;  // name-sorted
    std::map<std::string, Tensor<T>> grads;   // same keys, accumulated into
};

// Deterministic init for a given seed: Kaiming-uniform (fan-in) weights, zero
// biases, zeroed offset-estimator final layers so training starts from the
// plain separable-convolution point.
template <typename T>
Model<T> build_model(const ModelConfig& config, uint64_t seed);

template <typename T>
int64_t count_params(const Model<T>& m);

template <typename T>
void zero_grads(Model<T>& m);

// Everything the network predicts, plus the synthesized frame.
template <typename T>
struct SynthFields {
    Var<T> out;
    Var<T> kv1, kh1, kv2, kh2;  // [B,n,H,W]
    Var<T> off1, off2;          // [B,2n^2,H,W]
    Var<T> m1, m2;              // [B,n^2,H,W]; absent when masks disabled
    Var<T> db;                  // [B,3,H,W]; absent when bias disabled
};

// Builds the forward graph on the tape. Multi-time models require t in (0,1)
// (the constant control plane carries t into the frame-1 estimators and 1-t
// into the frame-2 ones); single-time models reject t. H and W must be
// divisible by 2^(levels-1).
template <typename T>
SynthFields<T> model_forward(Tape<T>& tape, Model<T>& model, Var<T> I1, Var<T> I2,
                             std::optional<double> t = std::nullopt);

// One-shot inference on a private tape.
template <typename T>
Tensor<T> interpolate(Model<T>& model, const Tensor<T>& I1, const Tensor<T>& I2,
                      std::optional<double> t = std::nullopt);

}  // namespace edsc
