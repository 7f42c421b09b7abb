#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "llab/graph.hpp"
#include "llab/hessian.hpp"
#include "llab/model_zoo.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

struct NoiseSpec {
    enum class Kind { kGaussian, kSaltPepper };
    Kind kind = Kind::kGaussian;
    // gaussian: sigma as a fraction of the [0,1] input range;
    // salt-pepper: probability of corrupting each pixel
    double intensity = 0.0;
    std::uint64_t seed = 0;
};

// Corrupts the inputs of both splits (targets untouched, so autoencoders
// are scored against the clean signal). Deterministic per seed.
Dataset corrupt_inputs(const Dataset& data, const NoiseSpec& spec);
Tensor corrupt_tensor(const Tensor& inputs, const NoiseSpec& spec, const std::string& stream_tag);

// FKeras-style sensitivity: H' = sum_i lambda_i (v_i . theta) v_i over the
// top-k eigenpairs. Parameters are ordered by descending |H'_i|, ties broken
// by descending |theta_i|, then by index.
struct SensitivityRanking {
    std::vector<double> scores;             // per parameter, full layout length
    std::vector<std::int64_t> param_order;  // all parameters, most sensitive first
    int k_eigs = 0;
};

SensitivityRanking sensitivity_scores(const ParamVector& params, const HessianReport& hessian,
                                      int k);

struct FaultPlan {
    struct Target {
        std::int64_t param_index;
        int bit;  // 0 = LSB, bits-1 = MSB
    };
    std::vector<Target> targets;  // no duplicates
    std::string method;           // "fkeras" | "random"
    int k_eigs = 0;
    std::uint64_t seed = 0;
};

// Parameter indices eligible for bit flips: quantized weight segments,
// restricted to the model's fault scope when one is declared (e.g. the
// econ-s encoder).
std::vector<std::int64_t> flippable_indices(const ModelGraph& model, const ModelQuant& quant);

// Ranked plan: parameters in sensitivity order, bits MSB -> LSB within each
// parameter, truncated to n_flips.
FaultPlan fkeras_plan(const ModelGraph& model, const ParamVector& params, const ModelQuant& quant,
                      const HessianReport& hessian, int n_flips, int k);

// Baseline: n_flips distinct (parameter, bit) pairs drawn uniformly.
FaultPlan random_plan(const ModelGraph& model, const ModelQuant& quant, int n_flips,
                      std::uint64_t seed);

struct FlipDelta {
    std::int64_t param_index;
    int bit;
    std::int16_t old_code, new_code;
    float delta_value;  // new - old dequantized
};

struct FlipResult {
    ParamVector params;  // perturbed copy
    std::vector<FlipDelta> deltas;
};

// XORs the designated bit of each target's two's-complement code. Codes
// stay in range by construction; scales and unquantized segments are never
// touched. Flipping the same bit twice restores the model exactly.
FlipResult flip_bits(const ParamVector& params, const ModelQuant& quant, const FaultPlan& plan);

struct RobustnessRow {
    int bits = 0;
    std::string variant;
    double stressor_param = 0.0;
    double mean_loss = 0.0;
    double std_loss = 0.0;
    int n_seeds = 0;
};

enum class StressorKind { kGaussianGrid, kSaltPepperGrid, kBitflipFkeras, kBitflipRandom };

const char* stressor_name(StressorKind kind);

struct SweepModelEntry {
    int bits = 0;
    std::string variant;
    std::uint64_t seed = 0;
    const ParamVector* params = nullptr;
    const ModelQuant* quant = nullptr;  // may be null for float models
};

struct SweepOptions {
    std::int64_t batch_size = 64;
    int hessian_k = 4;        // eigenpairs for the FKeras ranking
    int hessian_iters = 50;
    double hessian_tol = 1e-3;
    std::uint64_t noise_seed = 1;
    std::uint64_t ranking_seed = 1;
};

// Mean +- std of the test loss per (bit width, variant, stressor value),
// aggregated over seeds. The grid is noise intensities or flip counts
// depending on the stressor kind; value 0 always reproduces the clean loss.
std::vector<RobustnessRow> robustness_sweep(const ModelGraph& model,
                                            const std::vector<SweepModelEntry>& entries,
                                            const Dataset& data, StressorKind stressor,
                                            const std::vector<double>& grid,
                                            const SweepOptions& options = {});

}  // namespace llab
