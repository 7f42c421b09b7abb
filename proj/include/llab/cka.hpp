#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

// Model outputs on m fixed test samples, rows ordered by sample id. The
// same sample set must be used for every model being compared.
struct OutputMatrix {
    Tensor outputs;  // m x d_out
    std::vector<std::int64_t> sample_ids;
    double noise_sigma = 0.0;
};

// (m-1)^-2 tr(X X^T H Y Y^T H) with H the centering matrix, computed as
// ||Xc^T Yc||_F^2 / (m-1)^2 in double precision.
double cka_cov(const Tensor& x, const Tensor& y);

// Linear CKA between two output matrices; empty when either self-covariance
// vanishes (constant outputs), which is reported as undefined rather than 0.
std::optional<double> cka(const Tensor& f, const Tensor& f_prime);

struct CkaMatrix {
    std::int64_t m = 0;
    double noise_sigma = 0.0;
    std::uint64_t sample_seed = 0;
    std::vector<std::vector<std::optional<double>>> pairwise;  // symmetric
    std::optional<double> mean_offdiag;                        // strict upper triangle
};

struct ModelInstance {
    const ParamVector* params = nullptr;
    const ModelQuant* quant = nullptr;
};

// Outputs of one model on m samples drawn (seeded, without replacement)
// from the test split; optional clamped Gaussian input noise.
OutputMatrix collect_outputs(const ModelGraph& model, const ModelInstance& instance,
                             const Dataset& data, std::int64_t m, std::uint64_t sample_seed,
                             double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

// Pairwise CKA over model instances sharing one sample draw. Default m = 10.
CkaMatrix cka_grid(const ModelGraph& model, const std::vector<ModelInstance>& instances,
                   const Dataset& data, std::int64_t m = 10, double noise_sigma = 0.0,
                   std::uint64_t seed = 1);

// Mean off-diagonal CKA for each m in the sweep (shared sample seed).
std::vector<std::pair<std::int64_t, double>> cka_m_sweep(
    const ModelGraph& model, const std::vector<ModelInstance>& instances, const Dataset& data,
    const std::vector<std::int64_t>& ms, double noise_sigma = 0.0, std::uint64_t seed = 1);

}  // namespace llab
