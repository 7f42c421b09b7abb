#include "llab/quantizer.hpp"

#include <cmath>

#include "llab/errors.hpp"

namespace llab {

QuantSpec calibrate(const Tensor& weights, int bits) {
    if (weights.numel() == 0) throw ConfigError("calibrate on empty tensor");
    if (bits < 3 || bits > 12) throw ConfigError("bit width must be in [3,12], got " + std::to_string(bits));
    double maxabs = 0.0;
    for (float v : weights.data) maxabs = std::max(maxabs, std::fabs(static_cast<double>(v)));
    QuantSpec spec;
    spec.bits = bits;
    spec.scale = maxabs == 0.0
                     ? 1.0f
                     : static_cast<float>(maxabs / static_cast<double>((1 << (bits - 1)) - 1));
    return spec;
}

QuantizedTensor quantize(const Tensor& w, const QuantSpec& spec) {
    if (spec.scale <= 0.0f) throw ConfigError("quantize with non-positive scale");
    QuantizedTensor q;
    q.shape = w.shape;
    q.spec = spec;
    q.codes.resize(w.data.size());
    const double s = static_cast<double>(spec.scale);
    const double lo = static_cast<double>(spec.qmin());
    const double hi = static_cast<double>(spec.qmax());
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        double code = std::nearbyint(static_cast<double>(w.data[i]) / s);
        if (code < lo) code = lo;
        if (code > hi) code = hi;
        q.codes[i] = static_cast<std::int16_t>(code);
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t(q.shape);
    const double s = static_cast<double>(q.spec.scale);
    for (std::size_t i = 0; i < q.codes.size(); ++i)
        t.data[i] = static_cast<float>(static_cast<double>(q.codes[i]) * s);
    return t;
}

const QuantSpec* ModelQuant::spec_for(int segment) const {
    auto it = per_segment.find(segment);
    return it == per_segment.end() ? nullptr : &it->second;
}

ModelQuant calibrate_model(const ParamVector& params, int bits) {
    ModelQuant mq;
    mq.bits = bits;
    if (bits == 0) return mq;
    const auto& segs = params.layout->segments();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segs[i].role == SegRole::kBias) continue;
        mq.per_segment[static_cast<int>(i)] =
            calibrate(params.segment_tensor(static_cast<int>(i)), bits);
    }
    return mq;
}

ParamVector snap_to_grid(const ParamVector& params, const ModelQuant& quant) {
    ParamVector out = params;
    if (!quant.active()) return out;
    for (const auto& [seg, spec] : quant.per_segment)
        out.set_segment(seg, dequantize(quantize(params.segment_tensor(seg), spec)));
    return out;
}

}  // namespace llab
