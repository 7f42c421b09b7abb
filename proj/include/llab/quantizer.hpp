#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "llab/param.hpp"
#include "llab/tensor.hpp"

namespace llab {

// Symmetric signed uniform quantization metadata, one scale per tensor.
struct QuantSpec {
    int bits = 8;
    float scale = 1.0f;

    std::int32_t qmin() const { return -(1 << (bits - 1)); }
    std::int32_t qmax() const { return (1 << (bits - 1)) - 1; }
};

// Integer codes (two's-complement semantics in `bits` significant bits)
// stored widened to int16. Dequantized value is exactly code * scale.
struct QuantizedTensor {
    std::vector<std::int64_t> shape;
    std::vector<std::int16_t> codes;
    QuantSpec spec;
};

// scale = max(|w|) / (2^(b-1) - 1); all-zero weights fall back to scale 1.
QuantSpec calibrate(const Tensor& weights, int bits);

// code = clamp(round-half-to-even(w / s), qmin, qmax)
QuantizedTensor quantize(const Tensor& w, const QuantSpec& spec);
Tensor dequantize(const QuantizedTensor& q);

// Per-weight-segment quantization state of a model. Bias segments are kept
// in float. bits == 0 disables quantization entirely.
struct ModelQuant {
    int bits = 0;
    std::map<int, QuantSpec> per_segment;  // keyed by layout segment index

    bool active() const { return bits > 0; }
    const QuantSpec* spec_for(int segment) const;
};

// Calibrates every weight segment of `params` at the given bit width.
ModelQuant calibrate_model(const ParamVector& params, int bits);

// Replaces every quantized segment of `params` with its fake-quantized
// (round-trip) value, leaving float segments untouched.
ParamVector snap_to_grid(const ParamVector& params, const ModelQuant& quant);

}  // namespace llab
