#include "llab/param.hpp"

#include <cmath>

#include "llab/errors.hpp"

namespace llab {

Layout::Layout(std::vector<Segment> segments) : segments_(std::move(segments)) {
    std::int64_t offset = 0;
    for (auto& seg : segments_) {
        seg.offset = offset;
        seg.size = shape_numel(seg.shape);
        offset += seg.size;
    }
    total_ = offset;
}

int Layout::find(const std::string& name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i)
        if (segments_[i].name == name) return static_cast<int>(i);
    return -1;
}

ParamVector::ParamVector(LayoutPtr layout_in)
    : layout(std::move(layout_in)), values(static_cast<std::size_t>(layout->total()), 0.0f) {}

Tensor ParamVector::segment_tensor(int seg_index) const {
    const Segment& seg = layout->segments().at(static_cast<std::size_t>(seg_index));
    Tensor t(seg.shape);
    for (std::int64_t i = 0; i < seg.size; ++i) t.at(i) = values[static_cast<std::size_t>(seg.offset + i)];
    return t;
}

void ParamVector::set_segment(int seg_index, const Tensor& t) {
    const Segment& seg = layout->segments().at(static_cast<std::size_t>(seg_index));
    if (t.numel() != seg.size)
        throw ConfigError("segment '" + seg.name + "' expects " + std::to_string(seg.size) +
                          " values, got " + std::to_string(t.numel()));
    for (std::int64_t i = 0; i < seg.size; ++i) values[static_cast<std::size_t>(seg.offset + i)] = t.at(i);
}

ParamVector& ParamVector::axpy(double a, const ParamVector& x) {
    if (x.values.size() != values.size()) throw ConfigError("axpy length mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<float>(static_cast<double>(values[i]) + a * static_cast<double>(x.values[i]));
    return *this;
}

ParamVector& ParamVector::scale_inplace(double a) {
    for (auto& v : values) v = static_cast<float>(a * static_cast<double>(v));
    return *this;
}

double ParamVector::dot(const ParamVector& other) const {
    if (other.values.size() != values.size()) throw ConfigError("dot length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        acc += static_cast<double>(values[i]) * static_cast<double>(other.values[i]);
    return acc;
}

double ParamVector::norm() const {
    return std::sqrt(dot(*this));
}

std::vector<Tensor> unflatten(const ParamVector& p) {
    std::vector<Tensor> out;
    out.reserve(p.layout->segments().size());
    for (std::size_t i = 0; i < p.layout->segments().size(); ++i)
        out.push_back(p.segment_tensor(static_cast<int>(i)));
    return out;
}

ParamVector flatten(LayoutPtr layout, const std::vector<Tensor>& tensors) {
    if (tensors.size() != layout->segments().size())
        throw ConfigError("flatten: tensor count does not match layout");
    ParamVector p(std::move(layout));
    for (std::size_t i = 0; i < tensors.size(); ++i) p.set_segment(static_cast<int>(i), tensors[i]);
    return p;
}

}  // namespace llab
