#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "llab/errors.hpp"
#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/tape.hpp"
#include "test_util.hpp"

using namespace llab;
using namespace llab::testutil;

namespace {

// Straight re-evaluation of a model without any tape, mirroring the tape's
// accumulation order (double inside reductions, float storage) so results
// are bit-identical.
float taped_free_loss(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                      const Tensor& targets) {
    const std::int64_t batch = inputs.shape[0];
    Tensor cur = inputs;
    int seg = 0;
    for (const auto& layer : model.spec().layers) {
        switch (layer.kind) {
            case LayerKind::kDense: {
                const Tensor w = params.segment_tensor(seg++);
                const Tensor b = params.segment_tensor(seg++);
                const std::int64_t in = layer.units_in, out = layer.units_out;
                Tensor next({batch, out});
                for (std::int64_t i = 0; i < batch; ++i)
                    for (std::int64_t j = 0; j < out; ++j) {
                        double acc = 0.0;
                        for (std::int64_t p = 0; p < in; ++p)
                            acc += static_cast<double>(cur.at(i * in + p)) *
                                   static_cast<double>(w.at(p * out + j));
                        next.at(i * out + j) = static_cast<float>(acc) + 0.0f;
                    }
                // bias add is a separate float add, as on the tape
                for (std::int64_t i = 0; i < batch; ++i)
                    for (std::int64_t j = 0; j < out; ++j)
                        next.at(i * out + j) = next.at(i * out + j) + b.at(j);
                cur = std::move(next);
                break;
            }
            case LayerKind::kConv2d: {
                const Tensor w = params.segment_tensor(seg++);
                const Tensor b = params.segment_tensor(seg++);
                const std::int64_t ic = layer.in_ch, oc = layer.out_ch, k = layer.ksize,
                                   pad = layer.pad;
                const std::int64_t h = cur.shape[2], wd = cur.shape[3];
                const std::int64_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
                Tensor next({batch, oc, oh, ow});
                for (std::int64_t bn = 0; bn < batch; ++bn)
                    for (std::int64_t o = 0; o < oc; ++o)
                        for (std::int64_t y = 0; y < oh; ++y)
                            for (std::int64_t x = 0; x < ow; ++x) {
                                double acc = 0.0;
                                for (std::int64_t c = 0; c < ic; ++c)
                                    for (std::int64_t r = 0; r < k; ++r) {
                                        const std::int64_t iy = y + r - pad;
                                        if (iy < 0 || iy >= h) continue;
                                        for (std::int64_t s = 0; s < k; ++s) {
                                            const std::int64_t ix = x + s - pad;
                                            if (ix < 0 || ix >= wd) continue;
                                            acc += static_cast<double>(
                                                       cur.at(((bn * ic + c) * h + iy) * wd + ix)) *
                                                   static_cast<double>(
                                                       w.at(((o * ic + c) * k + r) * k + s));
                                        }
                                    }
                                next.at(((bn * oc + o) * oh + y) * ow + x) =
                                    static_cast<float>(acc);
                            }
                for (std::int64_t bn = 0; bn < batch; ++bn)
                    for (std::int64_t o = 0; o < oc; ++o)
                        for (std::int64_t i = 0; i < oh * ow; ++i)
                            next.at((bn * oc + o) * oh * ow + i) =
                                next.at((bn * oc + o) * oh * ow + i) + b.at(o);
                cur = std::move(next);
                break;
            }
            case LayerKind::kRelu:
                for (auto& v : cur.data) v = v > 0.0f ? v : 0.0f;
                break;
            case LayerKind::kSigmoid:
                for (auto& v : cur.data)
                    v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
                break;
            case LayerKind::kFlatten: {
                std::int64_t per = 1;
                for (std::size_t i = 1; i < cur.shape.size(); ++i) per *= cur.shape[i];
                cur.shape = {batch, per};
                break;
            }
        }
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < cur.data.size(); ++i) {
        const float d = cur.data[i] - targets.data[i];
        const float sq = d * d;
        acc += static_cast<double>(sq);
    }
    return static_cast<float>(acc / static_cast<double>(cur.data.size()));
}

}  // namespace

TEST_CASE("identity linear model has zero loss on matching target") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p(m.layout());
    p.values = {1, 0, 0, 1, 0, 0};  // W = I, b = 0
    Tensor x({1, 2}, {3, 4});
    Tensor y({1, 2}, {3, 4});
    CHECK(loss_value(m, p, x, y) == 0.0);
}

TEST_CASE("linear model MSE against zero target") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p(m.layout());
    p.values = {1, 0, 0, 1, 0, 0};
    Tensor x({1, 2}, {3, 4});
    Tensor y({1, 2}, {0, 0});
    CHECK(loss_value(m, p, x, y) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("scalar square gradient on raw tape") {
    Tape tape;
    const int theta = tape.leaf(Tensor::scalar(3.0f), true);
    const int y = tape.mul(theta, theta);
    const auto adj = tape.backward(y);
    CHECK(tape.val(adj[static_cast<std::size_t>(theta)]).item() == doctest::Approx(6.0));
}

TEST_CASE("hand-computed dense gradient") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p(m.layout());
    p.values = {1, 0, 0, 1, 0, 0};
    Tensor x({1, 2}, {3, 4});
    Tensor y({1, 2}, {0, 0});
    Forward fw = m.forward(p, x, &y);
    ParamVector g = m.gradient(fw);
    // L = (y1^2 + y2^2)/2, y = xW + b -> dL/dW_ij = x_i * y_j, dL/db_j = y_j
    const std::vector<float> expect = {9, 12, 12, 16, 3, 4};
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(g.values[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("gradient matches central finite differences on conv/sigmoid/dense/mse") {
    // Smooth everywhere, so the finite-difference oracle is exact to float
    // resolution. Covers conv2d at both paddings, sigmoid, dense, batch-mean
    // MSE.
    ModelSpec spec;
    spec.name = "coverage";
    spec.input_shape = {2, 5, 5};
    spec.layers = {LayerDef::conv2d("c1", 2, 3, 3, 1), LayerDef::sigmoid(),
                   LayerDef::conv2d("c2", 3, 2, 3, 0), LayerDef::sigmoid(),
                   LayerDef::flatten(), LayerDef::dense("f1", 2 * 3 * 3, 4),
                   LayerDef::sigmoid(), LayerDef::dense("f2", 4, 3)};
    ModelGraph m(spec);
    ParamVector p = init_params(m, 11);
    const Tensor x = random_tensor({3, 2, 5, 5}, 21);
    const Tensor y = random_tensor({3, 3}, 22);

    Forward fw = m.forward(p, x, &y);
    ParamVector g = m.gradient(fw);
    ParamVector fd = fd_gradient(m, p, x, y, 1e-3);
    double gmax = 0.0;
    for (float v : g.values) gmax = std::max(gmax, std::fabs(static_cast<double>(v)));
    for (std::size_t i = 0; i < g.values.size(); ++i)
        CHECK(std::fabs(static_cast<double>(g.values[i]) - static_cast<double>(fd.values[i])) <=
              1e-3 * gmax);
}

TEST_CASE("gradient matches finite differences through relu away from its kink") {
    // Pre-activations are verified to sit at least 0.05 from zero, so the
    // h = 1e-3 central difference never crosses the kink. Both active and
    // inactive units are exercised.
    ModelGraph m(mlp_spec({2, 4, 2}));
    ParamVector p(m.layout());
    // fc0.w (2x4), fc0.b (4), fc1.w (4x2), fc1.b (2)
    p.values = {0.8f, -0.5f, 0.9f, -1.1f, 0.4f, 0.7f, -0.6f, 0.5f,
                0.2f, -0.3f, 0.5f, -0.4f,
                0.6f, -0.2f, 0.3f, 0.9f, -0.7f, 0.4f, 0.1f, -0.8f,
                0.05f, -0.1f};
    const Tensor x({2, 2}, {0.9f, 0.3f, -0.4f, 0.8f});
    const Tensor y({2, 2}, {0.2f, -0.1f, 0.4f, 0.3f});

    // kink-free guard: recompute first-layer pre-activations by hand
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t j = 0; j < 4; ++j) {
            const double pre = static_cast<double>(x.at(n * 2 + 0)) * p.values[0 * 4 + j] +
                               static_cast<double>(x.at(n * 2 + 1)) * p.values[1 * 4 + j] +
                               p.values[8 + j];
            REQUIRE(std::fabs(pre) > 0.05);
        }

    Forward fw = m.forward(p, x, &y);
    ParamVector g = m.gradient(fw);
    ParamVector fd = fd_gradient(m, p, x, y, 1e-3);
    double gmax = 0.0;
    for (float v : g.values) gmax = std::max(gmax, std::fabs(static_cast<double>(v)));
    for (std::size_t i = 0; i < g.values.size(); ++i)
        CHECK(std::fabs(static_cast<double>(g.values[i]) - static_cast<double>(fd.values[i])) <=
              1e-3 * gmax);
}

TEST_CASE("quadratic-form hvp on raw tape") {
    // f = 2 a^2 + b^2 -> H = diag(4,2), v = (1,1) -> Hv = (4,2)
    Tape tape;
    const int a = tape.leaf(Tensor::scalar(0.7f), true);
    const int b = tape.leaf(Tensor::scalar(-1.3f), true);
    const int f = tape.add(tape.scale(tape.mul(a, a), 2.0), tape.mul(b, b));
    const auto adj = tape.backward(f);
    const int va = tape.leaf(Tensor::scalar(1.0f), false);
    const int vb = tape.leaf(Tensor::scalar(1.0f), false);
    const int s = tape.add(tape.mul(adj[static_cast<std::size_t>(a)], va),
                           tape.mul(adj[static_cast<std::size_t>(b)], vb));
    const auto adj2 = tape.backward(s);
    CHECK(tape.val(adj2[static_cast<std::size_t>(a)]).item() == doctest::Approx(4.0));
    CHECK(tape.val(adj2[static_cast<std::size_t>(b)]).item() == doctest::Approx(2.0));
}

TEST_CASE("hvp is linear in v") {
    ModelGraph m(mlp_spec({3, 4, 2}));
    ParamVector p = init_params(m, 5);
    const Tensor x = random_tensor({4, 3}, 31);
    const Tensor y = random_tensor({4, 2}, 32);
    ParamVector v = random_params_like(p, 33);
    ParamVector hv = m.hvp(p, x, y, v);
    ParamVector v3 = v;
    v3.scale_inplace(3.0);
    ParamVector hv3 = m.hvp(p, x, y, v3);
    for (std::size_t i = 0; i < hv.values.size(); ++i)
        CHECK(static_cast<double>(hv3.values[i]) ==
              doctest::Approx(3.0 * static_cast<double>(hv.values[i])).epsilon(1e-4));
}

TEST_CASE("hvp matches finite-difference of gradients on a 2-layer MLP") {
    ModelGraph m(mlp_spec({4, 6, 3}, /*sigmoid_hidden=*/true));
    ParamVector p = init_params(m, 7);
    const Tensor x = random_tensor({5, 4}, 41);
    const Tensor y = random_tensor({5, 3}, 42);
    ParamVector v = random_params_like(p, 43);
    const double vn = v.norm();
    v.scale_inplace(1.0 / vn);
    ParamVector hv = m.hvp(p, x, y, v);
    ParamVector fd = fd_hvp(m, p, x, y, v, 1e-3);
    CHECK(max_rel_err(hv.values, fd.values, 1e-3) < 1e-2);
}

TEST_CASE("hvp matches finite differences on a conv model") {
    // exercises the conv-dx/conv-dw backward family at second order
    ModelSpec spec;
    spec.name = "conv-hvp";
    spec.input_shape = {1, 4, 4};
    spec.layers = {LayerDef::conv2d("c1", 1, 2, 3, 1), LayerDef::sigmoid(),
                   LayerDef::conv2d("c2", 2, 2, 3, 0), LayerDef::flatten(),
                   LayerDef::dense("f", 8, 2)};
    ModelGraph m(spec);
    ParamVector p = init_params(m, 27);
    const Tensor x = random_tensor({3, 1, 4, 4}, 71);
    const Tensor y = random_tensor({3, 2}, 72);
    ParamVector v = random_params_like(p, 73);
    v.scale_inplace(1.0 / v.norm());
    ParamVector hv = m.hvp(p, x, y, v);
    ParamVector fd = fd_hvp(m, p, x, y, v, 1e-3);
    double hmax = 0.0;
    for (float s : hv.values) hmax = std::max(hmax, std::fabs(static_cast<double>(s)));
    for (std::size_t i = 0; i < hv.values.size(); ++i)
        CHECK(std::fabs(static_cast<double>(hv.values[i]) - static_cast<double>(fd.values[i])) <=
              1e-2 * std::max(hmax, 1e-6));
}

TEST_CASE("hvp symmetry as a bilinear form") {
    ModelGraph m(mlp_spec({3, 5, 2}, /*sigmoid_hidden=*/true));
    ParamVector p = init_params(m, 9);
    const Tensor x = random_tensor({4, 3}, 51);
    const Tensor y = random_tensor({4, 2}, 52);
    ParamVector u = random_params_like(p, 53);
    ParamVector v = random_params_like(p, 54);
    u.scale_inplace(1.0 / u.norm());
    v.scale_inplace(1.0 / v.norm());
    const double uhv = u.dot(m.hvp(p, x, y, v));
    const double vhu = v.dot(m.hvp(p, x, y, u));
    CHECK(std::fabs(uhv - vhu) <= 1e-6);

    // dense Hessian assembled column-by-column via hvp on basis vectors
    const std::int64_t n = p.size();
    std::vector<std::vector<float>> H;
    for (std::int64_t j = 0; j < n; ++j) {
        ParamVector e(p.layout);
        e.values[static_cast<std::size_t>(j)] = 1.0f;
        H.push_back(m.hvp(p, x, y, e).values);
    }
    double asym = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            asym = std::max(asym, std::fabs(static_cast<double>(H[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) -
                                            static_cast<double>(H[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])));
    CHECK(asym <= 1e-5);
}

TEST_CASE("input gradient of a linear map recovers weight columns") {
    ModelGraph m(mlp_spec({3, 2}));
    ParamVector p(m.layout());
    p.values = {1, 2, 3, 4, 5, 6, 0, 0};  // W rows: (1,2),(3,4),(5,6)
    const Tensor x({1, 3}, {0.3f, -0.7f, 0.2f});
    Tensor e1({2}, {1, 0});
    Tensor g = m.input_gradient(p, x, e1);
    CHECK(g.at(0) == doctest::Approx(1.0));
    CHECK(g.at(1) == doctest::Approx(3.0));
    CHECK(g.at(2) == doctest::Approx(5.0));
}

TEST_CASE("input gradient of identity model equals the projection") {
    ModelGraph m(mlp_spec({3, 3}));
    ParamVector p(m.layout());
    p.values = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
    const Tensor x({1, 3}, {0.1f, 0.5f, 0.9f});
    Tensor v({3}, {0.6f, -0.8f, 0.0f});
    Tensor g = m.input_gradient(p, x, v);
    for (int i = 0; i < 3; ++i) CHECK(g.at(i) == doctest::Approx(v.at(i)));
}

TEST_CASE("input gradient matches finite differences on a small MLP") {
    ModelGraph m(mlp_spec({4, 5, 3}));
    ParamVector p = init_params(m, 13);
    const Tensor x = random_tensor({2, 4}, 61);
    Tensor v({3}, {0.2f, -0.4f, 0.9f});
    Tensor g = m.input_gradient(p, x, v);

    auto projected = [&](const Tensor& xin) {
        Forward fw = m.forward(p, xin, nullptr);
        double acc = 0.0;
        const Tensor& out = fw.tape.val(fw.output);
        for (std::int64_t r = 0; r < out.shape[0]; ++r)
            for (std::int64_t c = 0; c < 3; ++c)
                acc += static_cast<double>(out.at(r * 3 + c)) * static_cast<double>(v.at(c));
        return acc;
    };
    const double h = 1e-3;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        Tensor hi = x, lo = x;
        hi.at(i) += static_cast<float>(h);
        lo.at(i) -= static_cast<float>(h);
        const double fd = (projected(hi) - projected(lo)) / (2.0 * h);
        CHECK(static_cast<double>(g.at(i)) == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("tape-free forward oracle agrees exactly on the conv autoencoder") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector p = init_params(m, 3);
    Dataset ds = generate_dataset("autoencode", 8, 2, 77);
    Forward fw = m.forward(p, ds.train_inputs, &ds.train_targets);
    const float taped = fw.tape.val(fw.loss).item();
    const float oracle = taped_free_loss(m, p, ds.train_inputs, ds.train_targets);
    CHECK(taped == oracle);  // bit-exact
}

TEST_CASE("flatten/unflatten is a bit-exact bijection") {
    ModelGraph m(zoo_spec("econ-s"));
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        ParamVector p = init_params(m, seed);
        ParamVector q = flatten(p.layout, unflatten(p));
        CHECK(std::memcmp(p.values.data(), q.values.data(), p.values.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("forward is deterministic bit-for-bit") {
    ModelGraph m(zoo_spec("fusion-s"));
    ParamVector p = init_params(m, 19);
    Dataset ds = generate_dataset("regress", 4, 2, 5);
    Forward a = m.forward(p, ds.train_inputs, &ds.train_targets);
    Forward b = m.forward(p, ds.train_inputs, &ds.train_targets);
    CHECK(a.tape.val(a.loss).item() == b.tape.val(b.loss).item());
    ParamVector ga = m.gradient(a);
    ParamVector gb = m.gradient(b);
    CHECK(std::memcmp(ga.values.data(), gb.values.data(), ga.values.size() * sizeof(float)) == 0);
}

TEST_CASE("shape mismatches raise configuration errors") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p(m.layout());
    Tensor bad({1, 3}, {1, 2, 3});
    CHECK_THROWS_AS((void)m.forward(p, bad, nullptr), ConfigError);
    ParamVector short_p = p;
    short_p.values.pop_back();
    Tensor ok({1, 2}, {1, 2});
    CHECK_THROWS_AS((void)m.forward(short_p, ok, nullptr), ConfigError);
}

TEST_CASE("non-finite values raise numeric errors carrying the op id") {
    Tape tape;
    const int big = tape.leaf(Tensor::scalar(3.0e38f), true);
    try {
        (void)tape.mul(big, big);
        CHECK(false);
    } catch (const NumericError& e) {
        CHECK(e.op_id >= 0);
    }
}
