#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "llab/tensor.hpp"

namespace llab {

enum class SegRole { kDenseWeight, kConvWeight, kBias };

struct Segment {
    std::string name;
    std::vector<std::int64_t> shape;
    SegRole role;
    std::int64_t offset = 0;
    std::int64_t size = 0;
};

// Describes how a flat parameter vector maps onto named layer tensors.
// Offsets are contiguous and non-overlapping by construction.
class Layout {
public:
    explicit Layout(std::vector<Segment> segments);

    const std::vector<Segment>& segments() const { return segments_; }
    std::int64_t total() const { return total_; }
    int find(const std::string& name) const;  // -1 when absent

private:
    std::vector<Segment> segments_;
    std::int64_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

// Flat float32 view of all trainable parameters of a model.
struct ParamVector {
    LayoutPtr layout;
    std::vector<float> values;

    ParamVector() = default;
    explicit ParamVector(LayoutPtr layout_in);

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    Tensor segment_tensor(int seg_index) const;
    void set_segment(int seg_index, const Tensor& t);

    // Elementwise helpers used by optimizers and direction arithmetic.
    ParamVector& axpy(double a, const ParamVector& x);  // this += a * x
    ParamVector& scale_inplace(double a);
    double dot(const ParamVector& other) const;
    double norm() const;
};

// unflatten/flatten round-trip is bit-exact: segments are raw slices.
std::vector<Tensor> unflatten(const ParamVector& p);
ParamVector flatten(LayoutPtr layout, const std::vector<Tensor>& tensors);

}  // namespace llab
