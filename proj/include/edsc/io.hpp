#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "edsc/model.hpp"
#include "edsc/tensor.hpp"

namespace edsc {

// key=value config text: one pair per line, '#' starts a comment, blank lines
// are skipped, whitespace around key and value is trimmed.
using KvPairs = std::vector<std::pair<std::string, std::string>>;

KvPairs parse_kv_text(const std::string& text);

// Last occurrence wins, so later pairs can layer over earlier ones. Returns
// nullptr when the key is absent.
const std::string* kv_find(const KvPairs& kv, const std::string& key);

KvPairs model_config_to_kv(const ModelConfig& c);

// Applies model.* keys onto the defaults. Unknown model.* keys throw; other
// namespaces (train.*, data.*, ...) are left to their own consumers.
ModelConfig model_config_from_kv(const KvPairs& kv);

// Binary PPM (P6, maxval 255). Channel values live in [0,1] and are quantized
// by round-half-up on write; read maps bytes back to v/255. Shape [1,3,H,W].
template <typename T>
Tensor<T> read_ppm(const std::string& path);

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& img);

// Checkpoint file layout, all integers little endian:
//   magic "EDSC", u32 version,
//   u32 config line count, then per line u32 length + "key=value" bytes,
//   u32 tensor count, then per tensor in name order:
//     u32 name length + bytes, u8 dtype (0 = f32, 1 = f64), u8 rank,
//     u32 dims (rank of them), raw element data.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    KvPairs config;
    std::map<std::string, Tensor<float>> f32;
    std::map<std::string, Tensor<double>> f64;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
Checkpoint make_checkpoint(const Model<T>& m);

// Strict load: the snapshot config must equal the model's and the checkpoint
// must carry exactly the model's parameter set, same shapes, same dtype.
// Mismatches throw DataError naming the offending key or tensor.
template <typename T>
void load_into_model(Model<T>& m, const Checkpoint& ck);

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck);

}  // namespace edsc
