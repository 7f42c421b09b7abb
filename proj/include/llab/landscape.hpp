#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/graph.hpp"
#include "llab/hessian.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

enum class DirectionKind { kRandomFilterNormalized, kHessianEigenvector };

// Unit of perturbation in parameter space. Random directions are normalized
// filter-wise: every output-unit slice of a weight tensor is rescaled to the
// norm of the corresponding parameter slice. Bias entries are zeroed, as in
// the reference filter-normalization scheme. Eigen directions are raw
// unit-norm Hessian eigenvectors.
struct Direction {
    ParamVector vector;
    DirectionKind kind = DirectionKind::kRandomFilterNormalized;
    int eigen_index = 0;     // 1-based for eigen kind
    std::uint64_t seed = 0;  // for random kind
    std::vector<std::string> warnings;  // dead filters etc.

    std::string describe() const;
};

Direction make_random_direction(const ParamVector& params, std::uint64_t seed);

// index is 1-based (top eigenvector is index 1).
Direction make_eigen_direction(const HessianReport& report, int index);

// Makes eta orthogonal to sigma slice-by-slice, then restores the
// filter-wise norms, so sigma . eta == 0 exactly while both stay
// filter-normalized.
void orthogonalize_pair(const ParamVector& params, const Direction& sigma, Direction& eta);

struct LandscapeGrid {
    std::vector<double> alphas;
    std::vector<double> betas;                 // {0} in 1-D mode
    std::vector<std::vector<double>> losses;   // [alpha][beta]
    std::vector<std::vector<char>> flagged;    // non-finite cells, scan continued
    std::string sigma_desc, eta_desc;
    std::uint64_t theta_hash = 0;

    bool is_1d() const { return betas.size() == 1 && betas[0] == 0.0; }
};

// losses[i][j] = mean loss at theta + alpha_i sigma + beta_j eta over the
// given split; alpha_i = nu_min + i (nu_max - nu_min)/(N-1). theta itself is
// never mutated. Pass eta == nullptr for a 1-D slice (beta fixed at 0).
LandscapeGrid scan(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                   const Tensor& targets, const Direction& sigma, const Direction* eta,
                   double nu_min, double nu_max, int steps, const ModelQuant* quant = nullptr,
                   std::int64_t batch_size = 64);

std::uint64_t param_hash(const ParamVector& params);

}  // namespace llab
