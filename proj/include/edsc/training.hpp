#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "edsc/autodiff.hpp"
#include "edsc/datagen.hpp"
#include "edsc/model.hpp"
#include "edsc/tensor.hpp"

namespace edsc {

enum class LossKind { charbonnier, charbonnier_feature };

struct LossConfig {
    LossKind kind = LossKind::charbonnier;
    double epsilon = 1e-6;        // Charbonnier smoothing
    double feature_weight = 0.01; // weight of the feature term when enabled
};

void validate(const LossConfig& c);  // throws std::invalid_argument

// Frozen feature pyramid standing in for a pretrained perceptual network:
// four 3x3 conv layers (3 -> 8 -> 16 -> 32 -> 32), each followed by ReLU and
// 2x2 average pooling, Kaiming-seeded once and never trained.
struct FeatureExtractor {
    std::vector<Tensor<float>> w;  // [Cout,Cin,3,3] per layer
    std::vector<Tensor<float>> b;  // [1,Cout,1,1] per layer
};

inline constexpr uint64_t kFeatureSeed = 101;

FeatureExtractor make_feature_extractor(uint64_t seed = kFeatureSeed);

// Runs the frozen stack on the tape (weights enter as constants, so gradient
// flows into x only). H and W must be multiples of 16.
template <typename T>
Var<T> extract_features(Tape<T>& tape, const FeatureExtractor& fx, Var<T> x);

// Mean squared distance between extracted features.
template <typename T>
Var<T> feature_loss(Tape<T>& tape, const FeatureExtractor& fx, Var<T> pred, Var<T> gt);

// Charbonnier, plus the weighted feature term when the config asks for it
// (fx may be null otherwise).
template <typename T>
Var<T> training_loss(Tape<T>& tape, const LossConfig& c, const FeatureExtractor* fx,
                     Var<T> pred, Var<T> gt);

// Bias-corrected Adam over a model's named parameters.
template <typename T>
struct OptimState {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;
    std::map<std::string, Tensor<T>> m, v;  // first/second moments, param shapes
};

template <typename T>
OptimState<T> make_optim_state(const Model<T>& model, double lr);

// One update from the gradients accumulated in model.grads. Throws
// NumericError naming the parameter on a non-finite gradient.
template <typename T>
void adam_step(Model<T>& model, OptimState<T>& st);

template <typename T>
Tensor<T> flip_h(const Tensor<T>& t);  // mirror along x
template <typename T>
Tensor<T> flip_v(const Tensor<T>& t);  // mirror along y

// Elementwise (1-alpha)*a + alpha*b over two same-architecture parameter
// sets; endpoints reproduce the inputs exactly. Throws DataError on any
// config, name, or shape mismatch.
template <typename T>
Model<T> dni_interpolate(const Model<T>& a, const Model<T>& b, double alpha);

struct TrainConfig {
    LossConfig loss;
    double lr = 1e-4;
    int epochs = 60;
    int halve_every = 20;  // epochs per learning-rate halving
    int batch = 4;         // samples accumulated per optimizer step
    bool augment = true;   // random horizontal/vertical flips
    uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double val_psnr = 0;
};

// "epoch, lr, train_loss, val_psnr"
std::string log_line(const EpochLog& e);

struct TrainResult {
    std::vector<EpochLog> log;
    std::map<double, int> time_draws;  // how often each target time was drawn
};

// Trains in place. Each epoch visits every training sequence once in a
// shuffled order; single-time models target the t=0.5 frame, multi-time
// models draw one interior frame per visit. Validation PSNR is measured at
// t=0.5 on val_seqs (on train_seqs when val is empty). on_epoch, when set,
// runs after every completed epoch (checkpointing hook).
// A non-finite loss or gradient aborts with NumericError after restoring the
// parameters of the last completed epoch.
TrainResult train(Model<float>& model, const std::vector<SyntheticSequence>& train_seqs,
                  const std::vector<SyntheticSequence>& val_seqs, const TrainConfig& cfg,
                  const std::function<void(const Model<float>&, const EpochLog&)>& on_epoch = {});

}  // namespace edsc
