#include "llab/model_zoo.hpp"

#include <cmath>

#include "llab/errors.hpp"

namespace llab {

ModelSpec zoo_spec(const std::string& name) {
    if (name == "econ-s") {
        ModelSpec s;
        s.name = "econ-s";
        s.input_shape = {1, 8, 8};
        s.layers = {LayerDef::conv2d("enc_conv", 1, 4, 3, 0), LayerDef::relu(),
                    LayerDef::flatten(), LayerDef::dense("enc_dense", 144, 16),
                    LayerDef::dense("dec_dense", 16, 64)};
        s.fault_scope = {"enc_conv", "enc_dense"};
        return s;
    }
    if (name == "fusion-s") {
        ModelSpec s;
        s.name = "fusion-s";
        s.input_shape = {1, 16, 16};
        s.layers = {LayerDef::conv2d("conv1", 1, 4, 7, 3),  LayerDef::relu(),
                    LayerDef::conv2d("conv2", 4, 8, 7, 3),  LayerDef::relu(),
                    LayerDef::flatten(),                    LayerDef::dense("head", 2048, 1)};
        return s;
    }
    throw ConfigError("unknown model spec '" + name + "'");
}

bool zoo_has(const std::string& name) {
    return name == "econ-s" || name == "fusion-s";
}

std::vector<std::string> zoo_names() {
    return {"econ-s", "fusion-s"};
}

ModelSpec mlp_spec(const std::vector<std::int64_t>& widths, bool sigmoid_hidden,
                   const std::string& name) {
    if (widths.size() < 2) throw ConfigError("mlp_spec needs at least input and output widths");
    ModelSpec s;
    s.name = name;
    s.input_shape = {widths[0]};
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        s.layers.push_back(LayerDef::dense("fc" + std::to_string(i), widths[i], widths[i + 1]));
        if (i + 2 < widths.size())
            s.layers.push_back(sigmoid_hidden ? LayerDef::sigmoid() : LayerDef::relu());
    }
    return s;
}

ParamVector init_params(const ModelGraph& model, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "init");
    ParamVector params(model.layout());
    for (const auto& seg : model.layout()->segments()) {
        if (seg.role == SegRole::kBias) continue;  // biases start at zero
        std::int64_t fan_in = 0;
        if (seg.role == SegRole::kDenseWeight) fan_in = seg.shape[0];
        else fan_in = seg.shape[1] * seg.shape[2] * seg.shape[3];
        const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
        for (std::int64_t i = 0; i < seg.size; ++i)
            params.values[static_cast<std::size_t>(seg.offset + i)] = rng.uniform(-limit, limit);
    }
    return params;
}

Tensor charge_deposit_image(Rng& rng) {
    Tensor img({1, 8, 8});
    const int n_dep = 1 + static_cast<int>(rng.below(4));
    double total = 0.0;
    for (int dep = 0; dep < n_dep; ++dep) {
        const float cx = rng.uniform(0.0f, 8.0f);
        const float cy = rng.uniform(0.0f, 8.0f);
        const float amp = rng.uniform(0.5f, 1.0f);
        const float spread = rng.uniform(0.6f, 1.5f);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const double dx = (x + 0.5) - cx;
                const double dy = (y + 0.5) - cy;
                img.at(y * 8 + x) += static_cast<float>(
                    amp * std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread)));
            }
    }
    for (float v : img.data) total += static_cast<double>(v);
    for (auto& v : img.data) v = static_cast<float>(static_cast<double>(v) / total);
    return img;
}

Tensor mode_pattern_image(float amplitude, int kx, int ky, float phase) {
    Tensor img({1, 16, 16});
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const double arg = two_pi * (kx * (x + 0.5) + ky * (y + 0.5)) / 16.0 +
                               static_cast<double>(phase);
            img.at(y * 16 + x) =
                static_cast<float>(0.5 + 0.5 * static_cast<double>(amplitude) * std::sin(arg));
        }
    return img;
}

namespace {

void fill_split(const std::string& task, Rng& rng, std::int64_t count, Tensor& inputs,
                Tensor& targets) {
    if (task == "autoencode") {
        inputs = Tensor({count, 1, 8, 8});
        for (std::int64_t i = 0; i < count; ++i) {
            const Tensor img = charge_deposit_image(rng);
            std::copy(img.data.begin(), img.data.end(), inputs.data.begin() + i * 64);
        }
        targets = inputs;
        targets.shape = {count, 1, 8, 8};
    } else if (task == "regress") {
        inputs = Tensor({count, 1, 16, 16});
        targets = Tensor({count, 1});
        for (std::int64_t i = 0; i < count; ++i) {
            const float amp = rng.uniform(0.0f, 1.0f);
            const int kx = 1 + static_cast<int>(rng.below(2));
            const int ky = 1 + static_cast<int>(rng.below(2));
            const float phase = rng.uniform(0.0f, 6.28318530717958647692f);
            const Tensor img = mode_pattern_image(amp, kx, ky, phase);
            std::copy(img.data.begin(), img.data.end(), inputs.data.begin() + i * 256);
            targets.at(i) = amp;
        }
    } else {
        throw ConfigError("unknown dataset task '" + task + "'");
    }
}

}  // namespace

Dataset generate_dataset(const std::string& task, std::int64_t train_size, std::int64_t test_size,
                         std::uint64_t seed) {
    if (train_size < 2 || test_size < 2) throw ConfigError("dataset split sizes must be >= 2");
    Dataset ds;
    ds.task = task;
    ds.seed = seed;
    Rng train_rng = Rng::stream(seed, "data.train");
    Rng test_rng = Rng::stream(seed, "data.test");
    fill_split(task, train_rng, train_size, ds.train_inputs, ds.train_targets);
    fill_split(task, test_rng, test_size, ds.test_inputs, ds.test_targets);
    return ds;
}

}  // namespace llab
