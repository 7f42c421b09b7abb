#include "llab/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

Tensor corrupt_tensor(const Tensor& inputs, const NoiseSpec& spec, const std::string& stream_tag) {
    if (spec.intensity < 0.0) throw ConfigError("noise intensity must be >= 0");
    if (spec.kind == NoiseSpec::Kind::kSaltPepper && spec.intensity > 1.0)
        throw ConfigError("salt-pepper probability must be in [0,1]");
    Tensor out = inputs;
    if (spec.intensity == 0.0) return out;
    Rng rng = Rng::stream(spec.seed, stream_tag);
    if (spec.kind == NoiseSpec::Kind::kGaussian) {
        for (auto& v : out.data) {
            const double noisy =
                static_cast<double>(v) + static_cast<double>(rng.normal()) * spec.intensity;
            v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    } else {
        for (auto& v : out.data) {
            if (rng.next_double() < spec.intensity) v = (rng.next_u64() & 1) ? 1.0f : 0.0f;
        }
    }
    return out;
}

Dataset corrupt_inputs(const Dataset& data, const NoiseSpec& spec) {
    Dataset out = data;
    out.train_inputs = corrupt_tensor(data.train_inputs, spec, "noise.train");
    out.test_inputs = corrupt_tensor(data.test_inputs, spec, "noise.test");
    return out;
}

SensitivityRanking sensitivity_scores(const ParamVector& params, const HessianReport& hessian,
                                      int k) {
    if (k < 1 || static_cast<std::size_t>(k) > hessian.eigenvectors.size())
        throw ConfigError("sensitivity_scores: k = " + std::to_string(k) +
                          " exceeds available eigenpairs (" +
                          std::to_string(hessian.eigenvectors.size()) + ")");
    SensitivityRanking rank;
    rank.k_eigs = k;
    rank.scores.assign(params.values.size(), 0.0);
    for (int i = 0; i < k; ++i) {
        const ParamVector& v = hessian.eigenvectors[static_cast<std::size_t>(i)];
        const double proj = hessian.eigenvalues[static_cast<std::size_t>(i)] * v.dot(params);
        for (std::size_t j = 0; j < rank.scores.size(); ++j)
            rank.scores[j] += proj * static_cast<double>(v.values[j]);
    }
    rank.param_order.resize(params.values.size());
    for (std::size_t i = 0; i < rank.param_order.size(); ++i)
        rank.param_order[i] = static_cast<std::int64_t>(i);
    std::stable_sort(rank.param_order.begin(), rank.param_order.end(),
                     [&](std::int64_t a, std::int64_t b) {
                         const double sa = std::fabs(rank.scores[static_cast<std::size_t>(a)]);
                         const double sb = std::fabs(rank.scores[static_cast<std::size_t>(b)]);
                         if (sa != sb) return sa > sb;
                         const double ta = std::fabs(
                             static_cast<double>(params.values[static_cast<std::size_t>(a)]));
                         const double tb = std::fabs(
                             static_cast<double>(params.values[static_cast<std::size_t>(b)]));
                         if (ta != tb) return ta > tb;
                         return a < b;
                     });
    return rank;
}

std::vector<std::int64_t> flippable_indices(const ModelGraph& model, const ModelQuant& quant) {
    if (!quant.active()) throw ConfigError("bit flips need a quantized model");
    const auto& scope = model.spec().fault_scope;
    std::vector<std::int64_t> out;
    const auto& segs = model.layout()->segments();
    for (const auto& [seg_idx, spec] : quant.per_segment) {
        (void)spec;
        const Segment& seg = segs[static_cast<std::size_t>(seg_idx)];
        if (!scope.empty()) {
            bool in_scope = false;
            for (const auto& prefix : scope)
                if (seg.name.rfind(prefix + ".", 0) == 0) in_scope = true;
            if (!in_scope) continue;
        }
        for (std::int64_t i = 0; i < seg.size; ++i) out.push_back(seg.offset + i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

FaultPlan fkeras_plan(const ModelGraph& model, const ParamVector& params, const ModelQuant& quant,
                      const HessianReport& hessian, int n_flips, int k) {
    const SensitivityRanking rank = sensitivity_scores(params, hessian, k);
    const std::vector<std::int64_t> pool = flippable_indices(model, quant);
    std::set<std::int64_t> flippable(pool.begin(), pool.end());

    FaultPlan plan;
    plan.method = "fkeras";
    plan.k_eigs = k;
    for (std::int64_t idx : rank.param_order) {
        if (static_cast<int>(plan.targets.size()) >= n_flips) break;
        if (!flippable.count(idx)) continue;
        for (int bit = quant.bits - 1; bit >= 0; --bit) {  // MSB first
            if (static_cast<int>(plan.targets.size()) >= n_flips) break;
            plan.targets.push_back({idx, bit});
        }
    }
    if (static_cast<int>(plan.targets.size()) < n_flips)
        throw ConfigError("fkeras_plan: not enough flippable bits for " +
                          std::to_string(n_flips) + " flips");
    return plan;
}

FaultPlan random_plan(const ModelGraph& model, const ModelQuant& quant, int n_flips,
                      std::uint64_t seed) {
    const std::vector<std::int64_t> pool = flippable_indices(model, quant);
    const std::int64_t total_bits = static_cast<std::int64_t>(pool.size()) * quant.bits;
    if (n_flips > total_bits)
        throw ConfigError("random_plan: " + std::to_string(n_flips) + " flips exceed " +
                          std::to_string(total_bits) + " available bits");
    Rng rng = Rng::stream(seed, "faults.random");
    std::set<std::pair<std::int64_t, int>> chosen;
    FaultPlan plan;
    plan.method = "random";
    plan.seed = seed;
    while (static_cast<int>(plan.targets.size()) < n_flips) {
        const std::int64_t flat = static_cast<std::int64_t>(
            rng.below(static_cast<std::uint64_t>(total_bits)));
        const std::int64_t idx = pool[static_cast<std::size_t>(flat / quant.bits)];
        const int bit = static_cast<int>(flat % quant.bits);
        if (chosen.insert({idx, bit}).second) plan.targets.push_back({idx, bit});
    }
    return plan;
}

FlipResult flip_bits(const ParamVector& params, const ModelQuant& quant, const FaultPlan& plan) {
    if (!quant.active()) throw ConfigError("flip_bits needs a quantized model");
    const auto& segs = params.layout->segments();

    auto segment_of = [&](std::int64_t idx) -> int {
        for (std::size_t s = 0; s < segs.size(); ++s)
            if (idx >= segs[s].offset && idx < segs[s].offset + segs[s].size)
                return static_cast<int>(s);
        return -1;
    };

    FlipResult result;
    result.params = params;
    std::set<std::pair<std::int64_t, int>> seen;
    for (const auto& target : plan.targets) {
        if (target.param_index < 0 || target.param_index >= params.size())
            throw ConfigError("flip target index out of range");
        if (target.bit < 0 || target.bit >= quant.bits)
            throw ConfigError("flip target bit out of range");
        if (!seen.insert({target.param_index, target.bit}).second)
            throw ConfigError("duplicate flip target");
        const int seg_idx = segment_of(target.param_index);
        const QuantSpec* spec = quant.spec_for(seg_idx);
        if (!spec) throw ConfigError("flip target in unquantized segment '" +
                                     segs[static_cast<std::size_t>(seg_idx)].name + "'");

        const double s = static_cast<double>(spec->scale);
        const float old_val = result.params.values[static_cast<std::size_t>(target.param_index)];
        double code_d = std::nearbyint(static_cast<double>(old_val) / s);
        code_d = std::clamp(code_d, static_cast<double>(spec->qmin()),
                            static_cast<double>(spec->qmax()));
        const std::int32_t old_code = static_cast<std::int32_t>(code_d);

        const std::uint32_t mask = (1u << quant.bits) - 1u;
        std::uint32_t u = static_cast<std::uint32_t>(old_code) & mask;
        u ^= (1u << target.bit);
        const std::int32_t new_code = (u >= (1u << (quant.bits - 1)))
                                          ? static_cast<std::int32_t>(u) - (1 << quant.bits)
                                          : static_cast<std::int32_t>(u);
        const float new_val = static_cast<float>(static_cast<double>(new_code) * s);
        result.params.values[static_cast<std::size_t>(target.param_index)] = new_val;
        result.deltas.push_back({target.param_index, target.bit,
                                 static_cast<std::int16_t>(old_code),
                                 static_cast<std::int16_t>(new_code), new_val - old_val});
    }
    return result;
}

const char* stressor_name(StressorKind kind) {
    switch (kind) {
        case StressorKind::kGaussianGrid: return "gaussian";
        case StressorKind::kSaltPepperGrid: return "salt-pepper";
        case StressorKind::kBitflipFkeras: return "bitflip-fkeras";
        case StressorKind::kBitflipRandom: return "bitflip-random";
    }
    return "?";
}

std::vector<RobustnessRow> robustness_sweep(const ModelGraph& model,
                                            const std::vector<SweepModelEntry>& entries,
                                            const Dataset& data, StressorKind stressor,
                                            const std::vector<double>& grid,
                                            const SweepOptions& options) {
    // group entries by (bits, variant); aggregate over seeds
    std::map<std::pair<int, std::string>, std::vector<const SweepModelEntry*>> groups;
    for (const auto& e : entries) groups[{e.bits, e.variant}].push_back(&e);

    // for the ranked stressor, compute each model's plan once at the largest
    // flip count; smaller counts are prefixes (top-1 is contained in top-5)
    std::map<const SweepModelEntry*, FaultPlan> ranked_plans;
    if (stressor == StressorKind::kBitflipFkeras) {
        int max_flips = 0;
        for (double level : grid) max_flips = std::max(max_flips, static_cast<int>(level));
        if (max_flips > 0)
            for (const auto& e : entries) {
                if (!e.quant || !e.quant->active())
                    throw ConfigError("bit-flip sweep needs quantized models");
                const HessianReport hess = top_eigenpairs(
                    model, *e.params, data.test_inputs, data.test_targets, options.hessian_k,
                    options.hessian_tol, options.hessian_iters, options.ranking_seed, e.quant);
                ranked_plans[&e] =
                    fkeras_plan(model, *e.params, *e.quant, hess, max_flips, options.hessian_k);
            }
    }

    std::vector<RobustnessRow> rows;
    for (const auto& [key, members] : groups) {
        for (double level : grid) {
            std::vector<double> losses;
            for (const SweepModelEntry* e : members) {
                double loss;
                if (stressor == StressorKind::kGaussianGrid ||
                    stressor == StressorKind::kSaltPepperGrid) {
                    NoiseSpec spec;
                    spec.kind = stressor == StressorKind::kGaussianGrid
                                    ? NoiseSpec::Kind::kGaussian
                                    : NoiseSpec::Kind::kSaltPepper;
                    spec.intensity = level;
                    spec.seed = options.noise_seed ^ e->seed;
                    const Tensor noisy = corrupt_tensor(data.test_inputs, spec, "noise.test");
                    loss = evaluate(model, *e->params, noisy, data.test_targets, e->quant,
                                    options.batch_size);
                } else {
                    const int n_flips = static_cast<int>(level);
                    if (n_flips == 0) {
                        loss = evaluate(model, *e->params, data.test_inputs, data.test_targets,
                                        e->quant, options.batch_size);
                    } else {
                        if (!e->quant || !e->quant->active())
                            throw ConfigError("bit-flip sweep needs quantized models");
                        FaultPlan plan;
                        if (stressor == StressorKind::kBitflipFkeras) {
                            plan = ranked_plans.at(e);
                            plan.targets.resize(static_cast<std::size_t>(n_flips));
                        } else {
                            plan = random_plan(model, *e->quant, n_flips,
                                               options.noise_seed ^ e->seed);
                        }
                        const FlipResult flipped = flip_bits(*e->params, *e->quant, plan);
                        loss = evaluate(model, flipped.params, data.test_inputs,
                                        data.test_targets, e->quant, options.batch_size);
                    }
                }
                losses.push_back(loss);
            }
            RobustnessRow row;
            row.bits = key.first;
            row.variant = key.second;
            row.stressor_param = level;
            row.n_seeds = static_cast<int>(losses.size());
            double mean = 0.0;
            for (double l : losses) mean += l;
            mean /= static_cast<double>(losses.size());
            double var = 0.0;
            if (losses.size() > 1) {
                for (double l : losses) var += (l - mean) * (l - mean);
                var /= static_cast<double>(losses.size() - 1);
            }
            row.mean_loss = mean;
            row.std_loss = std::sqrt(var);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace llab
