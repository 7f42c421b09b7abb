#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "llab/graph.hpp"
#include "llab/param.hpp"
#include "llab/rng.hpp"
#include "llab/tensor.hpp"

namespace llab::testutil {

inline double loss_value(const ModelGraph& m, const ParamVector& p, const Tensor& x,
                         const Tensor& y, const ModelQuant* q = nullptr) {
    Forward fw = m.forward(p, x, &y, q);
    return static_cast<double>(fw.tape.val(fw.loss).item());
}

// Central finite differences of the batch loss, h per coordinate.
inline ParamVector fd_gradient(const ModelGraph& m, const ParamVector& p, const Tensor& x,
                               const Tensor& y, double h = 1e-3, const ModelQuant* q = nullptr) {
    ParamVector g(p.layout);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        ParamVector lo = p, hi = p;
        hi.values[i] = static_cast<float>(static_cast<double>(p.values[i]) + h);
        lo.values[i] = static_cast<float>(static_cast<double>(p.values[i]) - h);
        g.values[i] = static_cast<float>(
            (loss_value(m, hi, x, y, q) - loss_value(m, lo, x, y, q)) / (2.0 * h));
    }
    return g;
}

// (grad(p + h v) - grad(p - h v)) / 2h, the directional oracle for hvp.
inline ParamVector fd_hvp(const ModelGraph& m, const ParamVector& p, const Tensor& x,
                          const Tensor& y, const ParamVector& v, double h = 1e-3) {
    ParamVector hi = p, lo = p;
    hi.axpy(h, v);
    lo.axpy(-h, v);
    Forward fh = m.forward(hi, x, &y);
    Forward fl = m.forward(lo, x, &y);
    ParamVector gh = m.gradient(fh);
    ParamVector gl = m.gradient(fl);
    ParamVector out(p.layout);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = static_cast<float>(
            (static_cast<double>(gh.values[i]) - static_cast<double>(gl.values[i])) / (2.0 * h));
    return out;
}

// Max over coordinates of |a-b| / max(|a|, |b|, floor).
inline double max_rel_err(const std::vector<float>& a, const std::vector<float>& b,
                          double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double av = static_cast<double>(a[i]);
        const double bv = static_cast<double>(b[i]);
        const double denom = std::max({std::fabs(av), std::fabs(bv), floor});
        worst = std::max(worst, std::fabs(av - bv) / denom);
    }
    return worst;
}

inline ParamVector random_params_like(const ParamVector& p, std::uint64_t seed, float lo = -0.5f,
                                      float hi = 0.5f) {
    ParamVector out(p.layout);
    Rng rng = Rng::stream(seed, "test.random");
    for (auto& v : out.values) v = rng.uniform(lo, hi);
    return out;
}

inline Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed, float lo = 0.0f,
                            float hi = 1.0f) {
    Tensor t(std::move(shape));
    Rng rng = Rng::stream(seed, "test.tensor");
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace llab::testutil
