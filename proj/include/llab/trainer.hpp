#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/errors.hpp"
#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

enum class Optimizer { kSgd, kAdam };
enum class Regularizer { kNone, kJacobian, kOrthogonal };

const char* regularizer_name(Regularizer r);
Regularizer regularizer_from_name(const std::string& name);

struct TrainConfig {
    int epochs = 100;
    std::int64_t batch_size = 32;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::kAdam;
    Regularizer reg = Regularizer::kNone;
    double delta = 0.0;  // regularization weight, >= 0
    int bits = 0;        // 0 trains in float, 3..12 enables QAT
    std::uint64_t seed = 1;
    int nproj = 1;  // Jacobian projections per training step
};

// Registered per-model regularization weights.
double default_delta(const std::string& model_name, Regularizer reg);

struct EpochStats {
    int epoch;
    double train_loss;
    double test_loss;
    double penalty;
};

struct TrainedModel {
    ParamVector params;
    ModelQuant quant;  // scales frozen after the final epoch; bits == 0 when FP
    std::vector<EpochStats> history;
    TrainConfig config;
};

// Estimate of mean_n ||J(x_n)||_F^2 over the batch using random unit
// projections: (d_out / nproj) * sum_v mean_n ||d(v.f(x_n))/dx_n||^2.
// Unbiased over the projection distribution.
double jacobian_penalty(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                        int nproj, std::uint64_t seed, const ModelQuant* quant = nullptr);

// Exact mode: projections over the full standard basis, no rescale.
double jacobian_penalty_basis(const ModelGraph& model, const ParamVector& params,
                              const Tensor& inputs, const ModelQuant* quant = nullptr);

// Sum over dense/conv weight tensors of ||W^T W - I||_F with conv kernels
// reshaped to (out-channels x fan-in) and the Gram taken over output units.
double orthogonal_penalty(const ParamVector& params);

// Penalty nodes recorded on an existing forward tape (used by the training
// loop so gradients flow through the penalty).
int build_orthogonal_penalty_node(Forward& fw);
int build_jacobian_penalty_node(const ModelGraph& model, Forward& fw, int nproj, Rng& rng);

// Thrown when the loss goes non-finite; carries the last completed epoch's
// parameters so callers can persist a usable checkpoint.
struct TrainDivergence : NumericError {
    TrainDivergence(const std::string& msg, int op_id, ParamVector last, int epoch_in)
        : NumericError(msg, op_id), last_good(std::move(last)), epoch(epoch_in) {}
    ParamVector last_good;
    int epoch;
};

// Seeded deterministic training; throws TrainDivergence on divergence.
TrainedModel train(const ModelGraph& model, const Dataset& data, const TrainConfig& config);

}  // namespace llab
