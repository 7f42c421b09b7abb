#include "llab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

const char* regularizer_name(Regularizer r) {
    switch (r) {
        case Regularizer::kNone: return "baseline";
        case Regularizer::kJacobian: return "jacobian";
        case Regularizer::kOrthogonal: return "orthogonal";
    }
    return "?";
}

Regularizer regularizer_from_name(const std::string& name) {
    if (name == "baseline" || name == "none") return Regularizer::kNone;
    if (name == "jacobian") return Regularizer::kJacobian;
    if (name == "orthogonal") return Regularizer::kOrthogonal;
    throw ConfigError("unknown regularizer '" + name + "'");
}

double default_delta(const std::string& model_name, Regularizer reg) {
    if (reg == Regularizer::kNone) return 0.0;
    if (model_name == "econ-s") return reg == Regularizer::kJacobian ? 0.1 : 1e-5;
    if (model_name == "fusion-s") return 1e-6;
    return 1e-4;
}

namespace {

// Gram matrix of output-unit weight vectors for one weight segment, as a
// (out x out) tape node. Dense weights are (in, out); conv kernels are
// reshaped to (out-channels x fan-in).
int gram_node(Tape& tape, int w_leaf, const Segment& seg) {
    if (seg.role == SegRole::kDenseWeight) return tape.matmul(w_leaf, w_leaf, true, false);
    const std::int64_t out = seg.shape[0];
    const std::int64_t fan_in = seg.shape[1] * seg.shape[2] * seg.shape[3];
    const int r = tape.reshape(w_leaf, {out, fan_in});
    return tape.matmul(r, r, false, true);
}

Tensor identity_matrix(std::int64_t n) {
    Tensor eye({n, n});
    for (std::int64_t i = 0; i < n; ++i) eye.at(i * n + i) = 1.0f;
    return eye;
}

}  // namespace

int build_orthogonal_penalty_node(Forward& fw) {
    Tape& tape = fw.tape;
    int total = -1;
    for (const auto& [seg_idx, leaf] : fw.param_leaves) {
        (void)seg_idx;
        // weight tensors are rank >= 2; biases rank 1
        if (tape.val(leaf).shape.size() < 2) continue;
        Segment pseudo;
        pseudo.shape = tape.val(leaf).shape;
        pseudo.role = pseudo.shape.size() == 2 ? SegRole::kDenseWeight : SegRole::kConvWeight;
        const int g = gram_node(tape, leaf, pseudo);
        const std::int64_t out = tape.val(g).shape[0];
        const int eye = tape.leaf(identity_matrix(out), false);
        const int diff = tape.sub(g, eye);
        const int term = tape.upow(tape.frobenius_sq(diff), 0.5);
        total = total < 0 ? term : tape.add(total, term);
    }
    return total < 0 ? tape.leaf(Tensor::scalar(0.0f), false) : total;
}

double orthogonal_penalty(const ParamVector& params) {
    double total = 0.0;
    const auto& segs = params.layout->segments();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Segment& seg = segs[i];
        if (seg.role == SegRole::kBias) continue;
        std::int64_t out, fan_in;
        if (seg.role == SegRole::kDenseWeight) {
            fan_in = seg.shape[0];
            out = seg.shape[1];
        } else {
            out = seg.shape[0];
            fan_in = seg.shape[1] * seg.shape[2] * seg.shape[3];
        }
        const Tensor w = params.segment_tensor(static_cast<int>(i));
        // column j of the (fan_in x out) view is output unit j's weights
        auto unit = [&](std::int64_t j, std::int64_t p) {
            return seg.role == SegRole::kDenseWeight
                       ? static_cast<double>(w.at(p * out + j))
                       : static_cast<double>(w.at(j * fan_in + p));
        };
        double frob_sq = 0.0;
        for (std::int64_t a = 0; a < out; ++a)
            for (std::int64_t b = 0; b < out; ++b) {
                double dotv = 0.0;
                for (std::int64_t p = 0; p < fan_in; ++p) dotv += unit(a, p) * unit(b, p);
                const double target = a == b ? 1.0 : 0.0;
                frob_sq += (dotv - target) * (dotv - target);
            }
        total += std::sqrt(frob_sq);
    }
    return total;
}

int build_jacobian_penalty_node(const ModelGraph& model, Forward& fw, int nproj, Rng& rng) {
    if (nproj < 1) throw ConfigError("jacobian penalty needs nproj >= 1");
    Tape& tape = fw.tape;
    const std::int64_t d_out = model.d_out();
    const std::int64_t batch = tape.val(fw.input).shape[0];
    int total = -1;
    for (int k = 0; k < nproj; ++k) {
        Tensor v({d_out});
        double norm_sq = 0.0;
        for (auto& x : v.data) {
            x = rng.normal();
            norm_sq += static_cast<double>(x) * static_cast<double>(x);
        }
        const double inv = 1.0 / std::sqrt(std::max(norm_sq, 1e-30));
        for (auto& x : v.data) x = static_cast<float>(static_cast<double>(x) * inv);

        const int v_leaf = tape.leaf(std::move(v), false);
        const int s = tape.dot(fw.output, tape.row_broadcast(v_leaf, batch));
        const auto adj = tape.backward(s);
        const int gx = adj[static_cast<std::size_t>(fw.input)];
        if (gx < 0) continue;  // constant model: zero contribution
        const int term = tape.scale(tape.frobenius_sq(gx), 1.0 / static_cast<double>(batch));
        total = total < 0 ? term : tape.add(total, term);
    }
    if (total < 0) return tape.leaf(Tensor::scalar(0.0f), false);
    return tape.scale(total, static_cast<double>(d_out) / static_cast<double>(nproj));
}

double jacobian_penalty(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                        int nproj, std::uint64_t seed, const ModelQuant* quant) {
    Forward fw = model.forward(params, inputs, nullptr, quant, /*want_input_grad=*/true);
    Rng rng = Rng::stream(seed, "jacobian.proj");
    const int pen = build_jacobian_penalty_node(model, fw, nproj, rng);
    return static_cast<double>(fw.tape.val(pen).item());
}

double jacobian_penalty_basis(const ModelGraph& model, const ParamVector& params,
                              const Tensor& inputs, const ModelQuant* quant) {
    Forward fw = model.forward(params, inputs, nullptr, quant, /*want_input_grad=*/true);
    Tape& tape = fw.tape;
    const std::int64_t d_out = model.d_out();
    const std::int64_t batch = tape.val(fw.input).shape[0];
    double total = 0.0;
    for (std::int64_t j = 0; j < d_out; ++j) {
        Tensor e({d_out});
        e.at(j) = 1.0f;
        const int v_leaf = tape.leaf(std::move(e), false);
        const int s = tape.dot(fw.output, tape.row_broadcast(v_leaf, batch));
        const auto adj = tape.backward(s);
        const int gx = adj[static_cast<std::size_t>(fw.input)];
        if (gx < 0) continue;
        const Tensor& g = tape.val(gx);
        double term = 0.0;
        for (float x : g.data) term += static_cast<double>(x) * static_cast<double>(x);
        total += term / static_cast<double>(batch);
    }
    return total;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    std::int64_t step = 0;
};

void apply_update(ParamVector& params, const ParamVector& grad, const TrainConfig& cfg,
                  AdamState& adam) {
    if (cfg.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < params.values.size(); ++i)
            params.values[i] = static_cast<float>(static_cast<double>(params.values[i]) -
                                                  cfg.lr * static_cast<double>(grad.values[i]));
        return;
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    if (adam.m.empty()) {
        adam.m.assign(params.values.size(), 0.0);
        adam.v.assign(params.values.size(), 0.0);
    }
    adam.step += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double g = static_cast<double>(grad.values[i]);
        adam.m[i] = kBeta1 * adam.m[i] + (1.0 - kBeta1) * g;
        adam.v[i] = kBeta2 * adam.v[i] + (1.0 - kBeta2) * g * g;
        const double mhat = adam.m[i] / bc1;
        const double vhat = adam.v[i] / bc2;
        params.values[i] = static_cast<float>(static_cast<double>(params.values[i]) -
                                              cfg.lr * mhat / (std::sqrt(vhat) + kEps));
    }
}

double penalty_estimate(const ModelGraph& model, const ParamVector& params, const Dataset& data,
                        const TrainConfig& cfg, const ModelQuant* quant, std::uint64_t epoch) {
    if (cfg.reg == Regularizer::kOrthogonal) return orthogonal_penalty(params);
    if (cfg.reg == Regularizer::kJacobian) {
        const std::int64_t n = std::min<std::int64_t>(data.train_inputs.shape[0], cfg.batch_size);
        const Tensor bx = slice_rows(data.train_inputs, 0, n);
        return jacobian_penalty(model, params, bx, cfg.nproj, cfg.seed ^ (epoch * 0x9e37ull),
                                quant);
    }
    return 0.0;
}

}  // namespace

TrainedModel train(const ModelGraph& model, const Dataset& data, const TrainConfig& config) {
    if (config.delta < 0.0) throw ConfigError("regularization weight must be >= 0");
    if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (config.bits != 0 && (config.bits < 3 || config.bits > 12))
        throw ConfigError("bit width must be 0 (float) or in [3,12]");

    TrainedModel out;
    out.config = config;
    out.params = init_params(model, config.seed);
    const std::int64_t n_train = data.train_inputs.shape[0];

    Rng shuffle_rng = Rng::stream(config.seed, "train.shuffle");
    Rng proj_rng = Rng::stream(config.seed, "train.jproj");

    const bool use_penalty = config.reg != Regularizer::kNone && config.delta > 0.0;
    const bool want_input_grad = use_penalty && config.reg == Regularizer::kJacobian;

    AdamState adam;
    ParamVector last_good = out.params;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.bits > 0) out.quant = calibrate_model(out.params, config.bits);
        const ModelQuant* quant = config.bits > 0 ? &out.quant : nullptr;

        // Fisher-Yates with the dedicated stream keeps runs reproducible.
        for (std::int64_t i = n_train - 1; i > 0; --i) {
            const std::int64_t j = static_cast<std::int64_t>(shuffle_rng.below(
                static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        try {
            for (std::int64_t begin = 0; begin < n_train; begin += config.batch_size) {
                const std::int64_t end = std::min(n_train, begin + config.batch_size);
                const std::int64_t bs = end - begin;
                // gather the shuffled batch
                Tensor bx(data.train_inputs.shape);
                bx.shape[0] = bs;
                bx.data.resize(static_cast<std::size_t>(shape_numel(bx.shape)));
                Tensor by(data.train_targets.shape);
                by.shape[0] = bs;
                by.data.resize(static_cast<std::size_t>(shape_numel(by.shape)));
                const std::int64_t in_per = shape_numel(data.train_inputs.shape) / n_train;
                const std::int64_t out_per = shape_numel(data.train_targets.shape) / n_train;
                for (std::int64_t i = 0; i < bs; ++i) {
                    const std::int64_t src = order[static_cast<std::size_t>(begin + i)];
                    std::copy_n(data.train_inputs.data.begin() + src * in_per, in_per,
                                bx.data.begin() + i * in_per);
                    std::copy_n(data.train_targets.data.begin() + src * out_per, out_per,
                                by.data.begin() + i * out_per);
                }

                Forward fw = model.forward(out.params, bx, &by, quant, want_input_grad);
                int total = fw.loss;
                if (use_penalty) {
                    const int pen = config.reg == Regularizer::kJacobian
                                        ? build_jacobian_penalty_node(model, fw, config.nproj,
                                                                      proj_rng)
                                        : build_orthogonal_penalty_node(fw);
                    total = fw.tape.add(total, fw.tape.scale(pen, config.delta));
                }
                ParamVector grad = model.gradient(fw, total);
                apply_update(out.params, grad, config, adam);
            }

            EpochStats stats;
            stats.epoch = epoch;
            stats.train_loss =
                evaluate(model, out.params, data.train_inputs, data.train_targets, quant);
            stats.test_loss =
                evaluate(model, out.params, data.test_inputs, data.test_targets, quant);
            stats.penalty = penalty_estimate(model, out.params, data, config, quant,
                                             static_cast<std::uint64_t>(epoch));
            out.history.push_back(stats);
        } catch (const NumericError& e) {
            throw TrainDivergence("training diverged in epoch " + std::to_string(epoch) + ": " +
                                      e.what(),
                                  e.op_id, std::move(last_good), epoch - 1);
        }
        last_good = out.params;
    }

    // Scales are recalibrated once more so the frozen analysis grid matches
    // the final weights, then never touched again.
    if (config.bits > 0) out.quant = calibrate_model(out.params, config.bits);
    return out;
}

}  // namespace llab
