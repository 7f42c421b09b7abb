#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "llab/graph.hpp"
#include "llab/param.hpp"
#include "llab/quantizer.hpp"

namespace llab {

struct HessianReport {
    std::vector<double> eigenvalues;         // descending by |lambda|
    std::vector<ParamVector> eigenvectors;   // unit norm, sign-fixed
    std::vector<int> iterations;             // power-iteration count per pair
    std::vector<bool> converged;             // per pair; non-convergence is flagged, not fatal
    double trace = 0.0;
    double trace_stderr = 0.0;
    int probes = 0;
    std::uint64_t batch_seed = 0;  // recorded so results are reproducible
    std::int64_t batch_size = 0;
};

// Abstract symmetric operator, used both for model Hessians (via hvp) and
// for analytic test operators.
using MatVec = std::function<ParamVector(const ParamVector&)>;

// Power iteration with deflation. Convergence when successive Rayleigh
// quotients differ by less than tol (relative); non-convergence within
// max_iters flags the pair. Eigenvector signs are fixed so the
// largest-magnitude component is positive.
HessianReport top_eigenpairs_matvec(const MatVec& op, const LayoutPtr& layout, int k,
                                    double tol = 1e-4, int max_iters = 100,
                                    std::uint64_t seed = 1);

HessianReport top_eigenpairs(const ModelGraph& model, const ParamVector& params,
                             const Tensor& inputs, const Tensor& targets, int k,
                             double tol = 1e-4, int max_iters = 100, std::uint64_t seed = 1,
                             const ModelQuant* quant = nullptr);

// Hutchinson estimator: mean over probes of z^T H z with Rademacher z.
// stderr is the sample standard deviation divided by sqrt(probes).
std::pair<double, double> hutchinson_trace_matvec(const MatVec& op, const LayoutPtr& layout,
                                                  int probes, std::uint64_t seed);

std::pair<double, double> hutchinson_trace(const ModelGraph& model, const ParamVector& params,
                                           const Tensor& inputs, const Tensor& targets, int probes,
                                           std::uint64_t seed, const ModelQuant* quant = nullptr);

// Test oracle: assembles the full Hessian column-by-column via hvp on basis
// vectors, symmetrized as (H + H^T)/2. Guarded to n <= 512.
struct DenseHessian {
    std::int64_t n = 0;
    std::vector<double> values;  // row-major n x n, symmetrized
    double max_asymmetry = 0.0;

    double at(std::int64_t i, std::int64_t j) const {
        return values[static_cast<std::size_t>(i * n + j)];
    }
    double trace() const;
};

DenseHessian dense_hessian_matvec(const MatVec& op, const LayoutPtr& layout);
DenseHessian dense_hessian(const ModelGraph& model, const ParamVector& params,
                           const Tensor& inputs, const Tensor& targets,
                           const ModelQuant* quant = nullptr);

// Cyclic Jacobi eigensolver for small symmetric matrices; eigenvalues
// returned sorted descending by |lambda|.
std::vector<double> jacobi_eigenvalues(const DenseHessian& h, int sweeps = 64);

// Wraps the model's task-loss Hessian at a fixed batch into a MatVec.
MatVec model_hvp_op(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                    const Tensor& targets, const ModelQuant* quant = nullptr);

}  // namespace llab
