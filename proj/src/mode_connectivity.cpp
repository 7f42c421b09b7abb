#include "llab/mode_connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

std::vector<double> bernstein_weights(int k, double t) {
    if (t < 0.0 || t > 1.0) throw RangeError("curve parameter t must be in [0,1]");
    std::vector<double> w(static_cast<std::size_t>(k + 1));
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
        if (j > 0) binom = binom * static_cast<double>(k - j + 1) / static_cast<double>(j);
        w[static_cast<std::size_t>(j)] =
            binom * std::pow(1.0 - t, static_cast<double>(k - j)) * std::pow(t, static_cast<double>(j));
    }
    return w;
}

ParamVector curve_point(const BezierCurve& curve, double t) {
    if (curve.anchors.empty()) throw StateError("curve has no anchors");
    const std::vector<double> w = bernstein_weights(curve.k(), t);
    ParamVector out(curve.anchors.front().layout);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < curve.anchors.size(); ++j)
            acc += w[j] * static_cast<double>(curve.anchors[j].values[i]);
        out.values[i] = static_cast<float>(acc);
    }
    return out;
}

BezierCurve train_bends(const ModelGraph& model, const ParamVector& theta_a,
                        const ParamVector& theta_b, int k, const Dataset& data,
                        const BendTrainConfig& config) {
    if (k < 1 || k > 10) throw ConfigError("bend count k must be in [1,10]");
    if (theta_a.size() != theta_b.size()) throw ConfigError("endpoints share one layout");

    BezierCurve curve;
    curve.anchors.reserve(static_cast<std::size_t>(k + 1));
    for (int j = 0; j <= k; ++j) {
        ParamVector anchor = theta_a;
        const double frac = static_cast<double>(j) / static_cast<double>(k);
        for (std::size_t i = 0; i < anchor.values.size(); ++i)
            anchor.values[i] = static_cast<float>(
                static_cast<double>(theta_a.values[i]) +
                frac * (static_cast<double>(theta_b.values[i]) -
                        static_cast<double>(theta_a.values[i])));
        curve.anchors.push_back(std::move(anchor));
    }
    curve.anchors.front() = theta_a;  // exact endpoints
    curve.anchors.back() = theta_b;
    curve.trained_epochs = config.epochs;
    if (config.epochs == 0 || k < 2) return curve;

    const std::int64_t n_train = data.train_inputs.shape[0];
    const std::int64_t n_interior = static_cast<std::int64_t>(k - 1);
    const std::size_t n_params = theta_a.values.size();

    Rng t_rng = Rng::stream(config.seed, "bends.t");
    Rng shuffle_rng = Rng::stream(config.seed, "bends.shuffle");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    // Adam state over the concatenated interior anchors
    std::vector<double> am, av;
    std::int64_t adam_step = 0;
    if (config.optimizer == Optimizer::kAdam) {
        am.assign(static_cast<std::size_t>(n_interior) * n_params, 0.0);
        av.assign(static_cast<std::size_t>(n_interior) * n_params, 0.0);
    }

    const std::int64_t in_per = shape_numel(data.train_inputs.shape) / n_train;
    const std::int64_t out_per = shape_numel(data.train_targets.shape) / n_train;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::int64_t i = n_train - 1; i > 0; --i) {
            const std::int64_t j = static_cast<std::int64_t>(
                shuffle_rng.below(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        for (std::int64_t begin = 0; begin < n_train; begin += config.batch_size) {
            const std::int64_t end = std::min(n_train, begin + config.batch_size);
            const std::int64_t bs = end - begin;
            Tensor bx(data.train_inputs.shape);
            bx.shape[0] = bs;
            bx.data.resize(static_cast<std::size_t>(shape_numel(bx.shape)));
            Tensor by(data.train_targets.shape);
            by.shape[0] = bs;
            by.data.resize(static_cast<std::size_t>(shape_numel(by.shape)));
            for (std::int64_t i = 0; i < bs; ++i) {
                const std::int64_t src = order[static_cast<std::size_t>(begin + i)];
                std::copy_n(data.train_inputs.data.begin() + src * in_per, in_per,
                            bx.data.begin() + i * in_per);
                std::copy_n(data.train_targets.data.begin() + src * out_per, out_per,
                            by.data.begin() + i * out_per);
            }

            const double t = t_rng.next_double();
            const std::vector<double> w = bernstein_weights(k, t);
            const ParamVector point = curve_point(curve, t);
            Forward fw = model.forward(point, bx, &by, nullptr);
            const ParamVector g = model.gradient(fw);

            // d(loss)/d(anchor_j) = w_j * g, applied to interior anchors only
            if (config.optimizer == Optimizer::kSgd) {
                for (std::int64_t j = 1; j < k; ++j) {
                    auto& anchor = curve.anchors[static_cast<std::size_t>(j)];
                    const double wj = w[static_cast<std::size_t>(j)];
                    for (std::size_t i = 0; i < n_params; ++i)
                        anchor.values[i] = static_cast<float>(
                            static_cast<double>(anchor.values[i]) -
                            config.lr * wj * static_cast<double>(g.values[i]));
                }
            } else {
                constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
                adam_step += 1;
                const double bc1 = 1.0 - std::pow(kB1, static_cast<double>(adam_step));
                const double bc2 = 1.0 - std::pow(kB2, static_cast<double>(adam_step));
                for (std::int64_t j = 1; j < k; ++j) {
                    auto& anchor = curve.anchors[static_cast<std::size_t>(j)];
                    const double wj = w[static_cast<std::size_t>(j)];
                    const std::size_t base = static_cast<std::size_t>(j - 1) * n_params;
                    for (std::size_t i = 0; i < n_params; ++i) {
                        const double gi = wj * static_cast<double>(g.values[i]);
                        am[base + i] = kB1 * am[base + i] + (1.0 - kB1) * gi;
                        av[base + i] = kB2 * av[base + i] + (1.0 - kB2) * gi * gi;
                        anchor.values[i] = static_cast<float>(
                            static_cast<double>(anchor.values[i]) -
                            config.lr * (am[base + i] / bc1) /
                                (std::sqrt(av[base + i] / bc2) + kEps));
                    }
                }
            }
        }
    }
    return curve;
}

ModeConnectivityReport mc_stats(const std::vector<double>& t_values,
                                const std::vector<double>& losses, double loss_a, double loss_b,
                                double epsilon_frac) {
    if (t_values.size() != losses.size() || t_values.size() < 3)
        throw ConfigError("mc_stats needs m > 2 sampled losses");
    ModeConnectivityReport rep;
    rep.t_values = t_values;
    rep.curve_losses = losses;
    const double avg = 0.5 * (loss_a + loss_b);
    rep.epsilon = epsilon_frac * avg;
    double best_abs = -1.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const double d = avg - losses[i];
        rep.d_values.push_back(d);
        if (std::fabs(d) > best_abs) {
            best_abs = std::fabs(d);
            rep.mc = d;
            rep.t_star = t_values[i];
        }
    }
    if (rep.mc > rep.epsilon) rep.classification = "better-minima";
    else if (rep.mc < -rep.epsilon) rep.classification = "barrier";
    else rep.classification = "well-connected";
    return rep;
}

ModeConnectivityReport mode_connectivity(const ModelGraph& model, const BezierCurve& curve,
                                         const Tensor& inputs, const Tensor& targets, int m,
                                         double epsilon_frac, std::int64_t batch_size) {
    if (m <= 2) throw ConfigError("mode connectivity samples m > 2 configurations");
    std::vector<double> tv, losses;
    for (int i = 0; i < m; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(m - 1);
        tv.push_back(t);
        losses.push_back(evaluate(model, curve_point(curve, t), inputs, targets, nullptr,
                                  batch_size));
    }
    return mc_stats(tv, losses, losses.front(), losses.back(), epsilon_frac);
}

MaxMcReport max_mc(const ModelGraph& model, const std::vector<const ParamVector*>& models,
                   const Dataset& data, int m, int k, const BendTrainConfig& config,
                   double epsilon_frac) {
    if (models.size() < 2) throw ConfigError("max_mc needs at least 2 models");
    if (m <= 2) throw ConfigError("max_mc samples m > 2 points");

    MaxMcReport report;
    bool first = true;
    for (std::size_t a = 0; a < models.size(); ++a)
        for (std::size_t b = a + 1; b < models.size(); ++b) {
            BezierCurve curve = train_bends(model, *models[a], *models[b], k, data, config);
            ModeConnectivityReport whole = mode_connectivity(
                model, curve, data.test_inputs, data.test_targets, m, epsilon_frac);

            // worst pairwise deviation over sampled parameter configurations:
            // for sample indices i < j, d uses the losses between them
            double pair_mc = 0.0;
            double best_abs = -1.0;
            const auto& L = whole.curve_losses;
            for (std::size_t i = 0; i < L.size(); ++i)
                for (std::size_t j = i + 1; j < L.size(); ++j) {
                    const double avg = 0.5 * (L[i] + L[j]);
                    for (std::size_t s = i; s <= j; ++s) {
                        const double d = avg - L[s];
                        if (std::fabs(d) > best_abs) {
                            best_abs = std::fabs(d);
                            pair_mc = d;
                        }
                    }
                }

            MaxMcReport::PairResult pr;
            pr.model_a = static_cast<int>(a);
            pr.model_b = static_cast<int>(b);
            pr.mc = pair_mc;
            pr.whole_curve = std::move(whole);
            // worst deviation across pairs, reported with its sign
            if (first || std::fabs(pair_mc) > std::fabs(report.max_mc)) report.max_mc = pair_mc;
            first = false;
            report.pairs.push_back(std::move(pr));
        }
    return report;
}

}  // namespace llab
