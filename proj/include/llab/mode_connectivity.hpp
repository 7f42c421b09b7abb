#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/param.hpp"
#include "llab/trainer.hpp"

namespace llab {

// k+1 anchor parameter vectors; anchors.front() and anchors.back() are the
// compared endpoints and are never modified by bend training.
struct BezierCurve {
    std::vector<ParamVector> anchors;
    int trained_epochs = 0;

    int k() const { return static_cast<int>(anchors.size()) - 1; }
};

// gamma(t) = sum_j C(k,j) (1-t)^(k-j) t^j theta_j, accumulated in double.
ParamVector curve_point(const BezierCurve& curve, double t);

std::vector<double> bernstein_weights(int k, double t);

struct BendTrainConfig {
    int epochs = 30;  // matches the reference setting of three bends / 30 epochs
    std::int64_t batch_size = 32;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::kAdam;
    std::uint64_t seed = 1;
};

// Interior anchors start on the linear interpolant, then minimize the
// expected loss along the curve: each step samples one t uniformly and
// backpropagates through gamma(t) into interior anchors only.
BezierCurve train_bends(const ModelGraph& model, const ParamVector& theta_a,
                        const ParamVector& theta_b, int k, const Dataset& data,
                        const BendTrainConfig& config);

struct ModeConnectivityReport {
    std::vector<double> t_values;      // m samples, t_0 = 0 and t_{m-1} = 1 included
    std::vector<double> curve_losses;  // loss of gamma(t_i)
    std::vector<double> d_values;      // deviation from the endpoint average at each sample
    double mc = 0.0;
    double t_star = 0.0;
    double epsilon = 0.0;
    std::string classification;  // better-minima | barrier | well-connected
};

// Pure statistic over precomputed losses: d(t) = (loss_a + loss_b)/2 -
// L(gamma(t)), mc = d(t*) with t* = argmax |d|. epsilon_frac scales the
// classification threshold off the endpoint average.
ModeConnectivityReport mc_stats(const std::vector<double>& t_values,
                                const std::vector<double>& losses, double loss_a, double loss_b,
                                double epsilon_frac = 0.05);

// Samples the curve at t_i = i/(m-1) (m > 2) and evaluates the loss on the
// given split. Quantized checkpoints are compared in dequantized space.
ModeConnectivityReport mode_connectivity(const ModelGraph& model, const BezierCurve& curve,
                                         const Tensor& inputs, const Tensor& targets, int m,
                                         double epsilon_frac = 0.05,
                                         std::int64_t batch_size = 64);

struct MaxMcReport {
    struct PairResult {
        int model_a = 0, model_b = 0;
        double mc = 0.0;  // worst pairwise deviation over sampled points
        ModeConnectivityReport whole_curve;
    };
    std::vector<PairResult> pairs;
    double max_mc = 0.0;
};

// The pairwise statistic over sampled curve configurations: for each model
// pair a Bezier curve is trained and sampled at m points (default 60); mc is
// then evaluated over every pair of sampled points using the losses between
// them, and the maximum over all pairs is reported.
MaxMcReport max_mc(const ModelGraph& model, const std::vector<const ParamVector*>& models,
                   const Dataset& data, int m, int k, const BendTrainConfig& config,
                   double epsilon_frac = 0.05);

}  // namespace llab
