#include "llab/landscape.hpp"

#include <cmath>
#include <limits>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

namespace {

struct SliceView {
    std::int64_t begin = 0;  // absolute offset into the flat vector
    std::int64_t count = 0;
    std::int64_t stride = 1;
};

// Output-unit slices of a weight segment: dense (in, out) -> column j with
// stride out; conv (oc, ic, kh, kw) -> contiguous fan-in block per channel.
std::vector<SliceView> filter_slices(const Segment& seg) {
    std::vector<SliceView> out;
    if (seg.role == SegRole::kDenseWeight) {
        const std::int64_t in = seg.shape[0], units = seg.shape[1];
        for (std::int64_t j = 0; j < units; ++j) out.push_back({seg.offset + j, in, units});
    } else if (seg.role == SegRole::kConvWeight) {
        const std::int64_t oc = seg.shape[0];
        const std::int64_t fan = seg.size / oc;
        for (std::int64_t o = 0; o < oc; ++o) out.push_back({seg.offset + o * fan, fan, 1});
    }
    return out;
}

double slice_norm(const std::vector<float>& v, const SliceView& s) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < s.count; ++i) {
        const double x = static_cast<double>(v[static_cast<std::size_t>(s.begin + i * s.stride)]);
        acc += x * x;
    }
    return std::sqrt(acc);
}

double slice_dot(const std::vector<float>& a, const std::vector<float>& b, const SliceView& s) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < s.count; ++i) {
        const std::size_t idx = static_cast<std::size_t>(s.begin + i * s.stride);
        acc += static_cast<double>(a[idx]) * static_cast<double>(b[idx]);
    }
    return acc;
}

void slice_scale(std::vector<float>& v, const SliceView& s, double factor) {
    for (std::int64_t i = 0; i < s.count; ++i) {
        auto& x = v[static_cast<std::size_t>(s.begin + i * s.stride)];
        x = static_cast<float>(static_cast<double>(x) * factor);
    }
}

}  // namespace

std::string Direction::describe() const {
    if (kind == DirectionKind::kHessianEigenvector)
        return "eigen:" + std::to_string(eigen_index);
    return "random-filternorm:" + std::to_string(seed);
}

Direction make_random_direction(const ParamVector& params, std::uint64_t seed) {
    Direction dir;
    dir.kind = DirectionKind::kRandomFilterNormalized;
    dir.seed = seed;
    dir.vector = ParamVector(params.layout);
    Rng rng = Rng::stream(seed, "landscape.direction");

    for (const auto& seg : params.layout->segments()) {
        if (seg.role == SegRole::kBias) continue;  // bias entries stay zero
        for (std::int64_t i = 0; i < seg.size; ++i)
            dir.vector.values[static_cast<std::size_t>(seg.offset + i)] = rng.normal();
        for (const SliceView& s : filter_slices(seg)) {
            const double theta_norm = slice_norm(params.values, s);
            const double d_norm = slice_norm(dir.vector.values, s);
            if (theta_norm < 1e-12) {  // dead unit: zero the slice
                slice_scale(dir.vector.values, s, 0.0);
                dir.warnings.push_back("zero-norm filter in segment '" + seg.name +
                                       "': direction slice set to zero");
            } else {
                slice_scale(dir.vector.values, s, theta_norm / std::max(d_norm, 1e-30));
            }
        }
    }
    return dir;
}

Direction make_eigen_direction(const HessianReport& report, int index) {
    if (index < 1 || static_cast<std::size_t>(index) > report.eigenvectors.size())
        throw ConfigError("eigen direction index " + std::to_string(index) +
                          " exceeds available eigenpairs (" +
                          std::to_string(report.eigenvectors.size()) + ")");
    Direction dir;
    dir.kind = DirectionKind::kHessianEigenvector;
    dir.eigen_index = index;
    dir.vector = report.eigenvectors[static_cast<std::size_t>(index - 1)];
    return dir;
}

void orthogonalize_pair(const ParamVector& params, const Direction& sigma, Direction& eta) {
    for (const auto& seg : params.layout->segments()) {
        if (seg.role == SegRole::kBias) continue;
        for (const SliceView& s : filter_slices(seg)) {
            const double sn = slice_norm(sigma.vector.values, s);
            if (sn < 1e-30) continue;
            const double proj = slice_dot(eta.vector.values, sigma.vector.values, s) / (sn * sn);
            for (std::int64_t i = 0; i < s.count; ++i) {
                const std::size_t idx = static_cast<std::size_t>(s.begin + i * s.stride);
                eta.vector.values[idx] = static_cast<float>(
                    static_cast<double>(eta.vector.values[idx]) -
                    proj * static_cast<double>(sigma.vector.values[idx]));
            }
            const double theta_norm = slice_norm(params.values, s);
            const double e_norm = slice_norm(eta.vector.values, s);
            if (e_norm < 1e-12) {
                slice_scale(eta.vector.values, s, 0.0);
                eta.warnings.push_back("slice in '" + seg.name +
                                       "' collinear with sigma: zeroed");
            } else {
                slice_scale(eta.vector.values, s, theta_norm / e_norm);
            }
        }
    }
}

std::uint64_t param_hash(const ParamVector& params) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(params.values.data()),
                                    params.values.size() * sizeof(float)));
}

LandscapeGrid scan(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                   const Tensor& targets, const Direction& sigma, const Direction* eta,
                   double nu_min, double nu_max, int steps, const ModelQuant* quant,
                   std::int64_t batch_size) {
    if (steps < 2) throw ConfigError("scan needs at least 2 steps");
    if (!(nu_min < nu_max)) throw ConfigError("scan requires nu_min < nu_max");
    if (eta) {
        const double overlap = std::fabs(sigma.vector.dot(eta->vector));
        if (overlap > 1e-4)
            throw ConfigError("2-D scan directions are not orthogonal (|sigma . eta| = " +
                              std::to_string(overlap) + ")");
    }

    LandscapeGrid grid;
    grid.sigma_desc = sigma.describe();
    grid.eta_desc = eta ? eta->describe() : "";
    grid.theta_hash = param_hash(params);

    for (int i = 0; i < steps; ++i)
        grid.alphas.push_back(nu_min + i * (nu_max - nu_min) / static_cast<double>(steps - 1));
    if (eta)
        for (int j = 0; j < steps; ++j)
            grid.betas.push_back(nu_min + j * (nu_max - nu_min) / static_cast<double>(steps - 1));
    else
        grid.betas.push_back(0.0);

    for (double alpha : grid.alphas) {
        std::vector<double> row;
        std::vector<char> row_flags;
        for (double beta : grid.betas) {
            ParamVector point = params;
            if (alpha != 0.0) point.axpy(alpha, sigma.vector);
            if (eta && beta != 0.0) point.axpy(beta, eta->vector);
            try {
                row.push_back(evaluate(model, point, inputs, targets, quant, batch_size));
                row_flags.push_back(0);
            } catch (const NumericError&) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                row_flags.push_back(1);
            }
        }
        grid.losses.push_back(std::move(row));
        grid.flagged.push_back(std::move(row_flags));
    }
    return grid;
}

}  // namespace llab
