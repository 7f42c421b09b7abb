#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "llab/graph.hpp"
#include "llab/model_zoo.hpp"
#include "llab/quantizer.hpp"
#include "test_util.hpp"

using namespace llab;
using namespace llab::testutil;

TEST_CASE("calibration formula") {
    Tensor w({2}, {-1.0f, 0.5f});
    QuantSpec s = calibrate(w, 4);
    CHECK(s.scale == doctest::Approx(1.0 / 7.0).epsilon(1e-7));
    CHECK(s.qmin() == -8);
    CHECK(s.qmax() == 7);
}

TEST_CASE("all-zero weights calibrate to unit scale") {
    Tensor w({3}, {0, 0, 0});
    CHECK(calibrate(w, 6).scale == 1.0f);
}

TEST_CASE("dequantization error bounded by half a step for in-range weights") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor w({64});
        for (auto& v : w.data) v = rng.uniform(-2.0f, 2.0f);
        for (int bits : {3, 8, 12}) {
            const QuantSpec spec = calibrate(w, bits);
            const Tensor back = dequantize(quantize(w, spec));
            for (std::size_t i = 0; i < w.data.size(); ++i)
                CHECK(std::fabs(static_cast<double>(back.data[i]) -
                                static_cast<double>(w.data[i])) <=
                      static_cast<double>(spec.scale) / 2.0 + 1e-9);
        }
    }
}

TEST_CASE("single value rounding and clamping") {
    QuantSpec s;
    s.bits = 3;
    s.scale = 0.5f;
    Tensor w({1}, {0.74f});
    QuantizedTensor q = quantize(w, s);
    CHECK(q.codes[0] == 1);
    CHECK(dequantize(q).at(0) == 0.5f);

    Tensor big({1}, {100.0f});
    q = quantize(big, s);
    CHECK(q.codes[0] == 3);  // qmax for 3 bits
    CHECK(dequantize(q).at(0) == 1.5f);
}

TEST_CASE("round-half-to-even at the midpoint") {
    QuantSpec s;
    s.bits = 8;
    s.scale = 1.0f;
    Tensor w({4}, {0.5f, 1.5f, 2.5f, -0.5f});
    QuantizedTensor q = quantize(w, s);
    CHECK(q.codes[0] == 0);
    CHECK(q.codes[1] == 2);
    CHECK(q.codes[2] == 2);
    CHECK(q.codes[3] == 0);
}

TEST_CASE("quantize is idempotent after a dequantize round trip") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor w({128});
        for (auto& v : w.data) v = rng.uniform(-3.0f, 3.0f);
        const QuantSpec spec = calibrate(w, 5);
        const QuantizedTensor q1 = quantize(w, spec);
        const QuantizedTensor q2 = quantize(dequantize(q1), spec);
        CHECK(q1.codes == q2.codes);
    }
}

TEST_CASE("quantization grid is symmetric") {
    QuantSpec s;
    s.bits = 6;
    s.scale = 0.125f;
    for (std::int16_t code = s.qmin() + 1; code <= s.qmax(); ++code) {
        QuantizedTensor qp{{1}, {code}, s};
        QuantizedTensor qn{{1}, {static_cast<std::int16_t>(-code)}, s};
        CHECK(dequantize(qn).at(0) == -dequantize(qp).at(0));
    }
}

TEST_CASE("straight-through estimator passes in-range gradients and blocks clamped ones") {
    // single fake-quantized weight, loss = fq(w) * c
    auto ste_grad = [](float wval, float scale, int bits) {
        Tape tape;
        const int w = tape.leaf(Tensor::scalar(wval), true);
        const int fq = tape.fake_quant(w, scale, bits);
        const int loss = tape.scale(fq, 2.0);
        const auto adj = tape.backward(loss);
        const int a = adj[static_cast<std::size_t>(w)];
        return a < 0 ? 0.0f : tape.val(a).item();
    };
    CHECK(ste_grad(0.4f, 0.25f, 4) == 2.0f);   // in range: d(loss)/dw = 2
    CHECK(ste_grad(10.0f, 0.25f, 4) == 0.0f);  // clamped: gradient zero
}

TEST_CASE("QAT on a one-parameter toy decreases loss where FP training does") {
    // loss(w) = (w*x - t)^2 at x=1, t=0.6; step both FP and fake-quant runs
    const float lr = 0.2f;
    float w_fp = -0.9f, w_q = -0.9f;
    QuantSpec spec;
    spec.bits = 6;
    spec.scale = 0.05f;
    auto q_loss_grad = [&](float w, float& grad) {
        Tape tape;
        const int wl = tape.leaf(Tensor::scalar(w), true);
        const int fq = tape.fake_quant(wl, spec.scale, spec.bits);
        const int t = tape.leaf(Tensor::scalar(0.6f), false);
        const int loss = tape.mse(fq, t);
        const auto adj = tape.backward(loss);
        grad = tape.val(adj[static_cast<std::size_t>(wl)]).item();
        return tape.val(loss).item();
    };
    float prev_q = 1e9f, prev_fp = 1e9f;
    for (int step = 0; step < 24; ++step) {
        float gq = 0.0f;
        const float lq = q_loss_grad(w_q, gq);
        const float lfp = (w_fp - 0.6f) * (w_fp - 0.6f);
        if (step > 0) {
            if (prev_fp > lfp + 1e-6f) CHECK(lq <= prev_q + 1e-6f);
        }
        prev_q = lq;
        prev_fp = lfp;
        w_q -= lr * gq;
        w_fp -= lr * 2.0f * (w_fp - 0.6f);
    }
    // both end near the optimum; quantized within one step of it
    CHECK(std::fabs(w_fp - 0.6f) < 1e-3f);
    CHECK(std::fabs(w_q - 0.6f) <= spec.scale);
}

TEST_CASE("12-bit quantization keeps surrogate loss within 1% of FP") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector p = init_params(m, 21);
    Dataset ds = generate_dataset("autoencode", 16, 4, 2);
    const double fp = evaluate(m, p, ds.test_inputs, ds.test_targets);
    const ModelQuant mq = calibrate_model(p, 12);
    const double q = evaluate(m, p, ds.test_inputs, ds.test_targets, &mq);
    CHECK(std::fabs(q - fp) / std::max(std::fabs(fp), 1e-12) < 0.01);
}

TEST_CASE("calibrated model quantizes weight segments only") {
    ModelGraph m(zoo_spec("econ-s"));
    ParamVector p = init_params(m, 5);
    const ModelQuant mq = calibrate_model(p, 8);
    for (std::size_t i = 0; i < p.layout->segments().size(); ++i) {
        const bool is_bias = p.layout->segments()[i].role == SegRole::kBias;
        CHECK((mq.spec_for(static_cast<int>(i)) == nullptr) == is_bias);
    }
}
