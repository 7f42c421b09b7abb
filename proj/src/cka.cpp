#include "llab/cka.hpp"

#include <algorithm>
#include <cmath>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

double cka_cov(const Tensor& x, const Tensor& y) {
    if (x.shape.size() != 2 || y.shape.size() != 2)
        throw ConfigError("cka_cov expects rank-2 matrices");
    const std::int64_t m = x.shape[0];
    if (m < 2) throw ConfigError("cka_cov needs m >= 2 samples");
    if (y.shape[0] != m) throw ConfigError("cka_cov sample count mismatch");
    const std::int64_t dx = x.shape[1], dy = y.shape[1];

    std::vector<double> xc(static_cast<std::size_t>(m * dx));
    std::vector<double> yc(static_cast<std::size_t>(m * dy));
    for (std::int64_t c = 0; c < dx; ++c) {
        double mean = 0.0;
        for (std::int64_t r = 0; r < m; ++r) mean += static_cast<double>(x.at(r * dx + c));
        mean /= static_cast<double>(m);
        for (std::int64_t r = 0; r < m; ++r)
            xc[static_cast<std::size_t>(r * dx + c)] = static_cast<double>(x.at(r * dx + c)) - mean;
    }
    for (std::int64_t c = 0; c < dy; ++c) {
        double mean = 0.0;
        for (std::int64_t r = 0; r < m; ++r) mean += static_cast<double>(y.at(r * dy + c));
        mean /= static_cast<double>(m);
        for (std::int64_t r = 0; r < m; ++r)
            yc[static_cast<std::size_t>(r * dy + c)] = static_cast<double>(y.at(r * dy + c)) - mean;
    }
    double frob_sq = 0.0;
    for (std::int64_t a = 0; a < dx; ++a)
        for (std::int64_t b = 0; b < dy; ++b) {
            double acc = 0.0;
            for (std::int64_t r = 0; r < m; ++r)
                acc += xc[static_cast<std::size_t>(r * dx + a)] *
                       yc[static_cast<std::size_t>(r * dy + b)];
            frob_sq += acc * acc;
        }
    const double denom = static_cast<double>(m - 1) * static_cast<double>(m - 1);
    return frob_sq / denom;
}

std::optional<double> cka(const Tensor& f, const Tensor& f_prime) {
    if (f.shape[0] != f_prime.shape[0]) throw ConfigError("cka sample count mismatch");
    const double self_a = cka_cov(f, f);
    const double self_b = cka_cov(f_prime, f_prime);
    if (self_a <= 1e-30 || self_b <= 1e-30) return std::nullopt;  // constant outputs
    return cka_cov(f, f_prime) / std::sqrt(self_a * self_b);
}

OutputMatrix collect_outputs(const ModelGraph& model, const ModelInstance& instance,
                             const Dataset& data, std::int64_t m, std::uint64_t sample_seed,
                             double noise_sigma, std::uint64_t noise_seed) {
    const std::int64_t n_test = data.test_inputs.shape[0];
    if (m < 2) throw ConfigError("cka needs m >= 2 samples");
    if (m > n_test)
        throw ConfigError("cka sample count " + std::to_string(m) + " exceeds test split size " +
                          std::to_string(n_test));

    // seeded draw without replacement, shared across models via the seed
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n_test));
    for (std::int64_t i = 0; i < n_test; ++i) pool[static_cast<std::size_t>(i)] = i;
    Rng rng = Rng::stream(sample_seed, "cka.samples");
    OutputMatrix out;
    for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t j = i + static_cast<std::int64_t>(rng.below(
            static_cast<std::uint64_t>(n_test - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        out.sample_ids.push_back(pool[static_cast<std::size_t>(i)]);
    }
    std::sort(out.sample_ids.begin(), out.sample_ids.end());

    std::vector<std::int64_t> shape = data.test_inputs.shape;
    shape[0] = m;
    Tensor inputs(shape);
    const std::int64_t per = shape_numel(shape) / m;
    for (std::int64_t i = 0; i < m; ++i)
        std::copy_n(data.test_inputs.data.begin() + out.sample_ids[static_cast<std::size_t>(i)] * per,
                    per, inputs.data.begin() + i * per);

    out.noise_sigma = noise_sigma;
    if (noise_sigma > 0.0) {
        Rng nrng = Rng::stream(noise_seed, "cka.noise");
        for (auto& v : inputs.data) {
            const double noisy = static_cast<double>(v) +
                                 static_cast<double>(nrng.normal()) * noise_sigma;
            v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    }

    Forward fw = model.forward(*instance.params, inputs, nullptr, instance.quant);
    out.outputs = fw.tape.val(fw.output);
    return out;
}

CkaMatrix cka_grid(const ModelGraph& model, const std::vector<ModelInstance>& instances,
                   const Dataset& data, std::int64_t m, double noise_sigma, std::uint64_t seed) {
    if (instances.size() < 2) throw ConfigError("cka_grid needs at least 2 model instances");
    std::vector<OutputMatrix> outs;
    outs.reserve(instances.size());
    for (const auto& inst : instances)
        outs.push_back(collect_outputs(model, inst, data, m, seed, noise_sigma, seed));

    CkaMatrix grid;
    grid.m = m;
    grid.noise_sigma = noise_sigma;
    grid.sample_seed = seed;
    const std::size_t n = instances.size();
    grid.pairwise.assign(n, std::vector<std::optional<double>>(n));
    double sum = 0.0;
    std::int64_t count = 0;
    bool any_undefined = false;
    for (std::size_t i = 0; i < n; ++i) {
        grid.pairwise[i][i] = cka(outs[i].outputs, outs[i].outputs);
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::optional<double> v = cka(outs[i].outputs, outs[j].outputs);
            grid.pairwise[i][j] = v;
            grid.pairwise[j][i] = v;
            if (v) {
                sum += *v;
                ++count;
            } else {
                any_undefined = true;
            }
        }
    }
    if (count > 0 && !any_undefined) grid.mean_offdiag = sum / static_cast<double>(count);
    return grid;
}

std::vector<std::pair<std::int64_t, double>> cka_m_sweep(
    const ModelGraph& model, const std::vector<ModelInstance>& instances, const Dataset& data,
    const std::vector<std::int64_t>& ms, double noise_sigma, std::uint64_t seed) {
    std::vector<std::pair<std::int64_t, double>> rows;
    for (std::int64_t m : ms) {
        const CkaMatrix grid = cka_grid(model, instances, data, m, noise_sigma, seed);
        rows.emplace_back(m, grid.mean_offdiag.value_or(
                                 std::numeric_limits<double>::quiet_NaN()));
    }
    return rows;
}

}  // namespace llab
