#include "llab/hessian.hpp"

#include <algorithm>
#include <cmath>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

namespace {

void project_out(ParamVector& v, const std::vector<ParamVector>& basis) {
    for (const auto& b : basis) {
        const double d = v.dot(b);
        v.axpy(-d, b);
    }
}

void fix_sign(ParamVector& v) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < v.values.size(); ++i) {
        const double mag = std::fabs(static_cast<double>(v.values[i]));
        if (mag > best) {
            best = mag;
            arg = i;
        }
    }
    if (v.values[arg] < 0.0f) v.scale_inplace(-1.0);
}

ParamVector random_unit(const LayoutPtr& layout, Rng& rng) {
    ParamVector v{layout};
    for (auto& x : v.values) x = rng.normal();
    const double n = v.norm();
    if (n > 0.0) v.scale_inplace(1.0 / n);
    return v;
}

}  // namespace

HessianReport top_eigenpairs_matvec(const MatVec& op, const LayoutPtr& layout, int k, double tol,
                                    int max_iters, std::uint64_t seed) {
    if (k < 1 || k > 10) throw ConfigError("top_eigenpairs requires 1 <= k <= 10");
    Rng rng = Rng::stream(seed, "hessian.power");
    HessianReport report;
    report.batch_seed = seed;

    for (int pair = 0; pair < k; ++pair) {
        ParamVector v = random_unit(layout, rng);
        project_out(v, report.eigenvectors);
        const double n0 = v.norm();
        if (n0 < 1e-12) {  // deflated subspace exhausted
            report.eigenvalues.push_back(0.0);
            report.eigenvectors.push_back(ParamVector{layout});
            report.iterations.push_back(0);
            report.converged.push_back(false);
            continue;
        }
        v.scale_inplace(1.0 / n0);

        double rq = 0.0, prev_rq = 0.0;
        bool have_prev = false, converged = false;
        int iters = 0;
        ParamVector v_report = v;
        for (int it = 0; it < max_iters; ++it) {
            iters = it + 1;
            ParamVector w = op(v);
            rq = v.dot(w);
            v_report = v;
            project_out(w, report.eigenvectors);
            const double wn = w.norm();
            if (wn < 1e-14) {  // operator annihilates the deflated iterate
                converged = true;
                break;
            }
            w.scale_inplace(1.0 / wn);
            if (have_prev &&
                std::fabs(rq - prev_rq) < tol * std::max(std::fabs(rq), 1e-12)) {
                converged = true;
                break;
            }
            prev_rq = rq;
            have_prev = true;
            v = std::move(w);
        }
        fix_sign(v_report);
        report.eigenvalues.push_back(rq);
        report.eigenvectors.push_back(std::move(v_report));
        report.iterations.push_back(iters);
        report.converged.push_back(converged);
    }
    return report;
}

HessianReport top_eigenpairs(const ModelGraph& model, const ParamVector& params,
                             const Tensor& inputs, const Tensor& targets, int k, double tol,
                             int max_iters, std::uint64_t seed, const ModelQuant* quant) {
    HessianReport r = top_eigenpairs_matvec(model_hvp_op(model, params, inputs, targets, quant),
                                            model.layout(), k, tol, max_iters, seed);
    r.batch_size = inputs.shape.empty() ? 0 : inputs.shape[0];
    return r;
}

std::pair<double, double> hutchinson_trace_matvec(const MatVec& op, const LayoutPtr& layout,
                                                  int probes, std::uint64_t seed) {
    if (probes < 1) throw ConfigError("hutchinson needs probes >= 1");
    Rng rng = Rng::stream(seed, "hutchinson");
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(probes));
    for (int pb = 0; pb < probes; ++pb) {
        ParamVector z{layout};
        for (auto& x : z.values) x = rng.sign();
        samples.push_back(z.dot(op(z)));
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(probes);
    double var = 0.0;
    if (probes > 1) {
        for (double s : samples) var += (s - mean) * (s - mean);
        var /= static_cast<double>(probes - 1);
    }
    return {mean, std::sqrt(var / static_cast<double>(probes))};
}

std::pair<double, double> hutchinson_trace(const ModelGraph& model, const ParamVector& params,
                                           const Tensor& inputs, const Tensor& targets, int probes,
                                           std::uint64_t seed, const ModelQuant* quant) {
    return hutchinson_trace_matvec(model_hvp_op(model, params, inputs, targets, quant),
                                   model.layout(), probes, seed);
}

double DenseHessian::trace() const {
    double t = 0.0;
    for (std::int64_t i = 0; i < n; ++i) t += at(i, i);
    return t;
}

DenseHessian dense_hessian_matvec(const MatVec& op, const LayoutPtr& layout) {
    const std::int64_t n = layout->total();
    if (n > 512) throw RangeError("dense_hessian refused: n = " + std::to_string(n) + " > 512");
    std::vector<double> raw(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t j = 0; j < n; ++j) {
        ParamVector e{layout};
        e.values[static_cast<std::size_t>(j)] = 1.0f;
        const ParamVector col = op(e);
        for (std::int64_t i = 0; i < n; ++i)
            raw[static_cast<std::size_t>(i * n + j)] = static_cast<double>(col.values[static_cast<std::size_t>(i)]);
    }
    DenseHessian h;
    h.n = n;
    h.values.resize(raw.size());
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const double a = raw[static_cast<std::size_t>(i * n + j)];
            const double b = raw[static_cast<std::size_t>(j * n + i)];
            h.values[static_cast<std::size_t>(i * n + j)] = 0.5 * (a + b);
            h.max_asymmetry = std::max(h.max_asymmetry, std::fabs(a - b));
        }
    return h;
}

DenseHessian dense_hessian(const ModelGraph& model, const ParamVector& params,
                           const Tensor& inputs, const Tensor& targets, const ModelQuant* quant) {
    return dense_hessian_matvec(model_hvp_op(model, params, inputs, targets, quant),
                                model.layout());
}

std::vector<double> jacobi_eigenvalues(const DenseHessian& h, int sweeps) {
    const std::int64_t n = h.n;
    std::vector<double> a = h.values;
    auto at = [&](std::int64_t i, std::int64_t j) -> double& {
        return a[static_cast<std::size_t>(i * n + j)];
    };
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double off = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-24) break;
        for (std::int64_t p = 0; p < n; ++p)
            for (std::int64_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-18) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::int64_t k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::int64_t k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = at(i, i);
    std::sort(eig.begin(), eig.end(),
              [](double x, double y) { return std::fabs(x) > std::fabs(y); });
    return eig;
}

MatVec model_hvp_op(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                    const Tensor& targets, const ModelQuant* quant) {
    // everything captured by value so the MatVec can outlive its arguments
    const ModelQuant q = quant ? *quant : ModelQuant{};
    return [model, params, inputs, targets, q](const ParamVector& v) {
        return model.hvp(params, inputs, targets, v, q.active() ? &q : nullptr);
    };
}

}  // namespace llab
