#pragma once

#include <cstdint>
#include <string>

#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

// Self-describing model state: magic "LLAB", format version, model spec
// name, per-layer records (f32 weights or i16 codes + f32 scale + bits),
// a key=value echo of the producing configuration, and the seed. Layouts
// are little-endian; load(save(x)) == x bit-exactly and unknown versions
// are rejected.
struct Checkpoint {
    std::string model_name;
    std::uint64_t seed = 0;
    std::string config_echo;  // key=value lines, parseable by config_parse
    ParamVector params;       // dequantized where segments are quantized
    ModelQuant quant;
};

std::string encode_checkpoint(const ModelGraph& model, const ParamVector& params,
                              const ModelQuant& quant, std::uint64_t seed,
                              const std::string& config_echo);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ModelGraph& model, const ParamVector& params,
                     const ModelQuant& quant, std::uint64_t seed, const std::string& config_echo);
Checkpoint load_checkpoint(const std::string& path);

// The same container holds datasets (kind tag differs).
std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace llab
