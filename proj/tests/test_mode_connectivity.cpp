#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "llab/errors.hpp"
#include "llab/mode_connectivity.hpp"
#include "llab/model_zoo.hpp"
#include "test_util.hpp"

using namespace llab;
using namespace llab::testutil;

namespace {

// two bias-free scalar layers: f(x) = w1 * w2 * x. With targets y = x the
// loss is (w1 w2 - 1)^2 * mean(x^2): two basins (hyperbola branches) split
// by a ridge along w1 = 0 or w2 = 0.
ModelGraph two_basin_model() {
    ModelSpec s;
    s.name = "two-basin";
    s.input_shape = {1};
    s.layers = {LayerDef::dense("a", 1, 1, false), LayerDef::dense("b", 1, 1, false)};
    return ModelGraph(s);
}

Dataset two_basin_data() {
    Dataset d;
    d.task = "custom";
    d.train_inputs = Tensor({4, 1}, {0.5f, 1.0f, -0.75f, 1.25f});
    d.train_targets = d.train_inputs;
    d.test_inputs = d.train_inputs;
    d.test_targets = d.train_inputs;
    return d;
}

double two_basin_loss(double w1, double w2, const Dataset& d) {
    double acc = 0.0;
    for (float x : d.test_inputs.data) {
        const double e = w1 * w2 * static_cast<double>(x) - static_cast<double>(x);
        acc += e * e;
    }
    return acc / static_cast<double>(d.test_inputs.data.size());
}

}  // namespace

TEST_CASE("curve endpoints are exact") {
    ModelGraph m(mlp_spec({3, 2}));
    BezierCurve c;
    c.anchors = {random_params_like(ParamVector(m.layout()), 1),
                 random_params_like(ParamVector(m.layout()), 2),
                 random_params_like(ParamVector(m.layout()), 3)};
    ParamVector p0 = curve_point(c, 0.0);
    ParamVector p1 = curve_point(c, 1.0);
    CHECK(std::memcmp(p0.values.data(), c.anchors.front().values.data(),
                      p0.values.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(p1.values.data(), c.anchors.back().values.data(),
                      p1.values.size() * sizeof(float)) == 0);
}

TEST_CASE("k=2 midpoint uses binomial weights 1/4, 1/2, 1/4") {
    ModelGraph m(mlp_spec({2, 2}));
    BezierCurve c;
    c.anchors = {random_params_like(ParamVector(m.layout()), 4),
                 random_params_like(ParamVector(m.layout()), 5),
                 random_params_like(ParamVector(m.layout()), 6)};
    ParamVector mid = curve_point(c, 0.5);
    for (std::size_t i = 0; i < mid.values.size(); ++i) {
        const double expect = 0.25 * c.anchors[0].values[i] + 0.5 * c.anchors[1].values[i] +
                              0.25 * c.anchors[2].values[i];
        CHECK(static_cast<double>(mid.values[i]) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("Bernstein weights are a partition of unity") {
    Rng rng(9);
    for (int k = 1; k <= 6; ++k)
        for (int trial = 0; trial < 20; ++trial) {
            const double t = rng.next_double();
            const auto w = bernstein_weights(k, t);
            double sum = 0.0;
            for (double x : w) sum += x;
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
        }
}

TEST_CASE("t outside [0,1] is a range error") {
    CHECK_THROWS_AS((void)bernstein_weights(2, -0.1), RangeError);
    CHECK_THROWS_AS((void)bernstein_weights(2, 1.1), RangeError);
}

TEST_CASE("zero-epoch bends realize the linear interpolation") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    a.values = {1.0f, 1.0f};
    b.values = {-1.0f, -1.0f};
    BendTrainConfig cfg;
    cfg.epochs = 0;
    BezierCurve c = train_bends(m, a, b, 2, d, cfg);
    for (double t : {0.2, 0.5, 0.9}) {
        ParamVector p = curve_point(c, t);
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            const double lin = (1.0 - t) * a.values[i] + t * b.values[i];
            CHECK(static_cast<double>(p.values[i]) == doctest::Approx(lin).epsilon(1e-6));
        }
    }
}

TEST_CASE("bend training never touches the endpoints") {
    ModelGraph m(mlp_spec({2, 3, 1}));
    Dataset d;
    d.task = "custom";
    d.train_inputs = random_tensor({8, 2}, 11);
    d.train_targets = random_tensor({8, 1}, 12);
    d.test_inputs = random_tensor({4, 2}, 13);
    d.test_targets = random_tensor({4, 1}, 14);
    ParamVector a = init_params(m, 1);
    ParamVector b = init_params(m, 2);
    ParamVector a_copy = a, b_copy = b;
    BendTrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    BezierCurve c = train_bends(m, a, b, 2, d, cfg);
    CHECK(std::memcmp(c.anchors.front().values.data(), a_copy.values.data(),
                      a.values.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(c.anchors.back().values.data(), b_copy.values.data(),
                      b.values.size() * sizeof(float)) == 0);
    // training moved the interior anchor off the interpolant
    ParamVector lin = a_copy;
    lin.axpy(0.5, b_copy);
    lin.axpy(-0.5, a_copy);
    bool moved = false;
    for (std::size_t i = 0; i < lin.values.size(); ++i)
        moved |= std::fabs(c.anchors[1].values[i] - lin.values[i]) > 1e-7f;
    CHECK(moved);
}

TEST_CASE("convex quadratic: trained curve max never exceeds the linear max") {
    ModelGraph m(mlp_spec({1, 1}));
    Dataset d;
    d.task = "custom";
    d.train_inputs = Tensor({2, 1}, {1.0f, 0.5f});
    d.train_targets = Tensor({2, 1}, {0.6f, 0.3f});
    d.test_inputs = d.train_inputs;
    d.test_targets = d.train_targets;
    ParamVector a(m.layout()), b(m.layout());
    a.values = {0.9f, -0.3f};  // both near the w + b = 0.6 minimum line
    b.values = {-0.2f, 0.8f};

    BendTrainConfig cfg;
    cfg.epochs = 0;
    BezierCurve linear = train_bends(m, a, b, 2, d, cfg);
    cfg.epochs = 40;
    BezierCurve trained = train_bends(m, a, b, 2, d, cfg);

    auto max_loss = [&](const BezierCurve& c) {
        double worst = 0.0;
        for (int i = 0; i < 41; ++i) {
            const double t = i / 40.0;
            worst = std::max(worst,
                             evaluate(m, curve_point(c, t), d.test_inputs, d.test_targets));
        }
        return worst;
    };
    CHECK(max_loss(trained) <= max_loss(linear) + 1e-9);
}

TEST_CASE("deviation statistic hand cases") {
    const std::vector<double> t = {0.0, 0.5, 1.0};
    // constant curve loss equal to the endpoint average: well connected
    ModeConnectivityReport r = mc_stats(t, {3.0, 3.0, 3.0}, 2.0, 4.0);
    CHECK(r.mc == 0.0);
    CHECK(r.classification == "well-connected");
    for (double d : r.d_values) CHECK(d == 0.0);

    // a bump of 5 among 3s: d = -2 there, barrier
    r = mc_stats({0.0, 0.25, 0.5, 0.75, 1.0}, {3.0, 3.0, 5.0, 3.0, 3.0}, 2.0, 4.0);
    CHECK(r.mc == -2.0);
    CHECK(r.t_star == 0.5);
    CHECK(r.classification == "barrier");

    // a dip to 1: d = +2, better minima
    r = mc_stats({0.0, 0.25, 0.5, 0.75, 1.0}, {3.0, 3.0, 1.0, 3.0, 3.0}, 2.0, 4.0);
    CHECK(r.mc == 2.0);
    CHECK(r.classification == "better-minima");
}

TEST_CASE("endpoint deviations follow the average-loss algebra") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    a.values = {1.1f, 0.95f};
    b.values = {0.8f, 1.3f};
    BendTrainConfig cfg;
    cfg.epochs = 0;
    BezierCurve c = train_bends(m, a, b, 2, d, cfg);
    ModeConnectivityReport r = mode_connectivity(m, c, d.test_inputs, d.test_targets, 5);
    const double la = r.curve_losses.front(), lb = r.curve_losses.back();
    CHECK(r.d_values.front() == doctest::Approx((lb - la) / 2.0).epsilon(1e-12));
    CHECK(r.d_values.back() == doctest::Approx((la - lb) / 2.0).epsilon(1e-12));
    CHECK(r.d_values.front() == doctest::Approx(-r.d_values.back()).epsilon(1e-12));
}

TEST_CASE("swapping endpoints on the same curve leaves mc unchanged") {
    const std::vector<double> t = {0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<double> losses = {1.0, 2.5, 0.5, 3.0, 2.0};
    ModeConnectivityReport fwd = mc_stats(t, losses, losses.front(), losses.back());
    std::vector<double> rev(losses.rbegin(), losses.rend());
    ModeConnectivityReport bwd = mc_stats(t, rev, rev.front(), rev.back());
    CHECK(fwd.mc == bwd.mc);
}

TEST_CASE("refining m never shrinks |mc| on a fixed curve") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    a.values = {1.0f, 1.0f};
    b.values = {-1.0f, -1.0f};
    BendTrainConfig cfg;
    cfg.epochs = 0;
    BezierCurve c = train_bends(m, a, b, 2, d, cfg);
    double prev = -1.0;
    for (int m_samples : {3, 5, 9, 17}) {  // nested grids
        ModeConnectivityReport r =
            mode_connectivity(m, c, d.test_inputs, d.test_targets, m_samples);
        CHECK(std::fabs(r.mc) + 1e-12 >= prev);
        prev = std::fabs(r.mc);
    }
}

TEST_CASE("identical models with untrained bends give exactly zero max mc") {
    ModelGraph m(mlp_spec({2, 2}));
    ParamVector p = init_params(m, 3);
    Dataset d;
    d.task = "custom";
    d.train_inputs = random_tensor({4, 2}, 21);
    d.train_targets = random_tensor({4, 2}, 22);
    d.test_inputs = random_tensor({4, 2}, 23);
    d.test_targets = random_tensor({4, 2}, 24);
    BendTrainConfig cfg;
    cfg.epochs = 0;
    MaxMcReport r = max_mc(m, {&p, &p}, d, 10, 2, cfg);
    CHECK(r.max_mc == 0.0);
}

TEST_CASE("max mc dominates every reported pair") {
    ModelGraph m(mlp_spec({2, 3, 1}));
    Dataset d;
    d.task = "custom";
    d.train_inputs = random_tensor({8, 2}, 31);
    d.train_targets = random_tensor({8, 1}, 32);
    d.test_inputs = random_tensor({4, 2}, 33);
    d.test_targets = random_tensor({4, 1}, 34);
    ParamVector a = init_params(m, 4);
    ParamVector b = init_params(m, 5);
    ParamVector c = init_params(m, 6);
    BendTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    MaxMcReport r = max_mc(m, {&a, &b, &c}, d, 12, 2, cfg);
    CHECK(r.pairs.size() == 3);
    for (const auto& pr : r.pairs) CHECK(std::fabs(r.max_mc) >= std::fabs(pr.mc));
}

TEST_CASE("two-basin toy: mc is negative and matches the closed-form grid oracle") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    a.values = {1.0f, 1.0f};
    b.values = {-1.0f, -1.0f};

    // the ridge: any path between the branches crosses w1 = 0 or w2 = 0,
    // where the loss is mean(x^2); confirm with a dense grid scan
    double ridge_floor = 1e30;
    for (int i = 0; i <= 80; ++i) {
        const double w = -2.0 + 4.0 * i / 80.0;
        ridge_floor = std::min(ridge_floor, two_basin_loss(0.0, w, d));
        ridge_floor = std::min(ridge_floor, two_basin_loss(w, 0.0, d));
    }
    const double mean_x2 = two_basin_loss(0.0, 0.0, d);
    CHECK(ridge_floor == doctest::Approx(mean_x2).epsilon(1e-12));

    BendTrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.lr = 0.05;
    BezierCurve curve = train_bends(m, a, b, 2, d, cfg);
    ModeConnectivityReport rep = mode_connectivity(m, curve, d.test_inputs, d.test_targets, 61);

    CHECK(rep.mc < 0.0);
    CHECK(rep.classification == "barrier");
    // the barrier is at least the ridge floor (endpoints are exact minima)
    CHECK(-rep.mc >= ridge_floor * 0.999);

    // closed-form oracle evaluated at the same sampled points
    std::vector<double> oracle_losses;
    for (double t : rep.t_values) {
        ParamVector p = curve_point(curve, t);
        oracle_losses.push_back(
            two_basin_loss(static_cast<double>(p.values[0]), static_cast<double>(p.values[1]), d));
    }
    ModeConnectivityReport oracle = mc_stats(rep.t_values, oracle_losses, oracle_losses.front(),
                                             oracle_losses.back());
    CHECK(rep.mc == doctest::Approx(oracle.mc).epsilon(0.05));
}

TEST_CASE("max_mc on the two-basin pair is negative and within 5% of the oracle") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    a.values = {1.0f, 1.0f};
    b.values = {-1.0f, -1.0f};
    BendTrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.lr = 0.05;
    MaxMcReport r = max_mc(m, {&a, &b}, d, 60, 2, cfg);
    // max over pairs of sampled configurations still cannot beat the ridge:
    // every sub-path between opposite-branch samples crosses it
    CHECK(r.pairs.size() == 1);
    CHECK(r.pairs[0].whole_curve.mc < 0.0);

    // oracle recomputation of the same pairwise statistic from closed form
    const BezierCurve curve = train_bends(m, a, b, 2, d, cfg);
    std::vector<double> L;
    for (int i = 0; i < 60; ++i) {
        const double t = i / 59.0;
        ParamVector p = curve_point(curve, t);
        L.push_back(two_basin_loss(p.values[0], p.values[1], d));
    }
    // worst deviation over all sampled pairs, signed
    double oracle_best_abs = -1.0, oracle_max = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i)
        for (std::size_t j = i + 1; j < L.size(); ++j) {
            const double avg = 0.5 * (L[i] + L[j]);
            for (std::size_t s = i; s <= j; ++s) {
                const double dv = avg - L[s];
                if (std::fabs(dv) > oracle_best_abs) {
                    oracle_best_abs = std::fabs(dv);
                    oracle_max = dv;
                }
            }
        }
    CHECK(r.max_mc < 0.0);
    CHECK(r.max_mc == doctest::Approx(oracle_max).epsilon(0.05));
}

TEST_CASE("m <= 2 is rejected") {
    ModelGraph m = two_basin_model();
    Dataset d = two_basin_data();
    ParamVector a(m.layout()), b(m.layout());
    BendTrainConfig cfg;
    cfg.epochs = 0;
    BezierCurve c = train_bends(m, a, b, 2, d, cfg);
    CHECK_THROWS_AS((void)mode_connectivity(m, c, d.test_inputs, d.test_targets, 2), ConfigError);
}
