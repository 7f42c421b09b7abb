#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "llab/errors.hpp"
#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "test_util.hpp"

using namespace llab;
using namespace llab::testutil;

TEST_CASE("registered specs have the documented parameter counts") {
    ModelGraph econ(zoo_spec("econ-s"));
    // enc_conv 36+4, enc_dense 2304+16, dec_dense 1024+64
    CHECK(econ.param_count() == 3448);
    // encoder stays within the small-parameter regime
    std::int64_t enc = 0;
    for (const auto& seg : econ.layout()->segments())
        if (seg.name.rfind("enc_", 0) == 0) enc += seg.size;
    CHECK(enc == 2360);
    CHECK(enc <= 4096);

    ModelGraph fusion(zoo_spec("fusion-s"));
    CHECK(fusion.param_count() == 3825);
    CHECK(fusion.param_count() > econ.param_count());
    CHECK(fusion.d_out() == 1);
    CHECK(econ.d_out() == 64);
}

TEST_CASE("custom 2-2-2 MLP has 12 parameters") {
    ModelGraph m(mlp_spec({2, 2, 2}));
    CHECK(m.param_count() == 12);
}

TEST_CASE("same seed builds bit-identical parameters, different seeds differ") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector a = init_params(m, 42);
    ParamVector b = init_params(m, 42);
    CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0);
    ParamVector c = init_params(m, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.values.size(); ++i) any_diff |= (a.values[i] != c.values[i]);
    CHECK(any_diff);
}

TEST_CASE("non-composing layer shapes are rejected") {
    ModelSpec bad;
    bad.name = "bad";
    bad.input_shape = {3};
    bad.layers = {LayerDef::dense("fc", 4, 2)};
    CHECK_THROWS_AS(ModelGraph{bad}, ConfigError);
}

TEST_CASE("autoencode dataset: targets equal inputs, pixels in [0,1]") {
    Dataset ds = generate_dataset("autoencode", 4, 2, 7);
    CHECK(ds.train_inputs.shape == std::vector<std::int64_t>{4, 1, 8, 8});
    CHECK(std::memcmp(ds.train_inputs.data.data(), ds.train_targets.data.data(),
                      ds.train_inputs.data.size() * sizeof(float)) == 0);
    for (float v : ds.train_inputs.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (float v : ds.test_inputs.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("regress dataset: amplitude zero gives a flat image") {
    const Tensor img = mode_pattern_image(0.0f, 1, 2, 1.234f);
    for (float v : img.data) CHECK(v == 0.5f);
}

TEST_CASE("regress dataset pixels within [0,1] and targets in [0,1]") {
    Dataset ds = generate_dataset("regress", 6, 3, 9);
    for (float v : ds.train_inputs.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (float v : ds.train_targets.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("dataset regeneration is bit-exact and splits are disjoint") {
    Dataset a = generate_dataset("autoencode", 6, 4, 123);
    Dataset b = generate_dataset("autoencode", 6, 4, 123);
    CHECK(std::memcmp(a.train_inputs.data.data(), b.train_inputs.data.data(),
                      a.train_inputs.data.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.test_inputs.data.data(), b.test_inputs.data.data(),
                      a.test_inputs.data.size() * sizeof(float)) == 0);
    // disjoint streams: no train image equals any test image
    for (std::int64_t i = 0; i < 6; ++i)
        for (std::int64_t j = 0; j < 4; ++j)
            CHECK(std::memcmp(a.train_inputs.data.data() + i * 64,
                              a.test_inputs.data.data() + j * 64, 64 * sizeof(float)) != 0);
}

TEST_CASE("generator formula reproduced independently") {
    // Reimplementation of the documented charge-deposit formula, consuming
    // the same RNG stream. Must agree pixel-for-pixel.
    const std::uint64_t seed = 55;
    Dataset ds = generate_dataset("autoencode", 3, 2, seed);
    Rng rng = Rng::stream(seed, "data.train");
    for (std::int64_t i = 0; i < 3; ++i) {
        float img[64] = {0};
        const int n_dep = 1 + static_cast<int>(rng.below(4));
        for (int dep = 0; dep < n_dep; ++dep) {
            const float cx = rng.uniform(0.0f, 8.0f);
            const float cy = rng.uniform(0.0f, 8.0f);
            const float amp = rng.uniform(0.5f, 1.0f);
            const float spread = rng.uniform(0.6f, 1.5f);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const double dx = (x + 0.5) - cx;
                    const double dy = (y + 0.5) - cy;
                    img[y * 8 + x] += static_cast<float>(
                        amp * std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread)));
                }
        }
        double total = 0.0;
        for (float v : img) total += static_cast<double>(v);
        double mean = 0.0, var = 0.0, mean_ref = 0.0, var_ref = 0.0;
        for (int k = 0; k < 64; ++k) {
            const double ours = static_cast<double>(ds.train_inputs.at(i * 64 + k));
            const double ref = static_cast<double>(img[k]) / total;
            CHECK(ours == doctest::Approx(ref).epsilon(1e-7));
            mean += ours / 64.0;
            mean_ref += ref / 64.0;
        }
        for (int k = 0; k < 64; ++k) {
            const double ours = static_cast<double>(ds.train_inputs.at(i * 64 + k));
            const double ref = static_cast<double>(img[k]) / total;
            var += (ours - mean) * (ours - mean) / 64.0;
            var_ref += (ref - mean_ref) * (ref - mean_ref) / 64.0;
        }
        CHECK(mean == doctest::Approx(mean_ref).epsilon(1e-9));
        CHECK(var == doctest::Approx(var_ref).epsilon(1e-9));
    }
}

TEST_CASE("evaluate: identity-capable params give zero loss") {
    // dense identity on the flattened image reproduces the input exactly
    ModelSpec s;
    s.name = "ident";
    s.input_shape = {4};
    s.layers = {LayerDef::dense("fc", 4, 4)};
    ModelGraph m(s);
    ParamVector p(m.layout());
    for (int i = 0; i < 4; ++i) p.values[static_cast<std::size_t>(i * 4 + i)] = 1.0f;
    const Tensor x = random_tensor({5, 4}, 71);
    CHECK(evaluate(m, p, x, x) == 0.0);
}

TEST_CASE("evaluate equals naive per-sample mean and is invariant to batching") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector p = init_params(m, 4);
    Dataset ds = generate_dataset("autoencode", 10, 4, 11);

    const double full = evaluate(m, p, ds.train_inputs, ds.train_targets, nullptr, 10);
    // naive loop: mean over per-sample losses
    double naive = 0.0;
    for (std::int64_t i = 0; i < 10; ++i) {
        const Tensor xi = slice_rows(ds.train_inputs, i, i + 1);
        const Tensor yi = slice_rows(ds.train_targets, i, i + 1);
        naive += loss_value(m, p, xi, yi) / 10.0;
    }
    CHECK(full == doctest::Approx(naive).epsilon(1e-9));

    for (std::int64_t bs : {1, 3, 4, 7}) {
        const double part = evaluate(m, p, ds.train_inputs, ds.train_targets, nullptr, bs);
        CHECK(std::fabs(part - full) < 1e-6);
    }
}

TEST_CASE("evaluate is invariant to flatten/unflatten round-trip") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector p = init_params(m, 8);
    Dataset ds = generate_dataset("autoencode", 4, 2, 3);
    const double a = evaluate(m, p, ds.train_inputs, ds.train_targets);
    ParamVector q = flatten(p.layout, unflatten(p));
    const double b = evaluate(m, q, ds.train_inputs, ds.train_targets);
    CHECK(a == b);
}

TEST_CASE("evaluate on empty split is a configuration error") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p(m.layout());
    Tensor empty({0, 2});
    CHECK_THROWS_AS((void)evaluate(m, p, empty, empty), ConfigError);
}
