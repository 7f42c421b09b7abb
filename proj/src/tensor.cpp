#include "llab/tensor.hpp"

#include <cmath>
#include <string>

#include "llab/errors.hpp"

namespace llab {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<std::int64_t> shape_in)
    : shape(std::move(shape_in)), data(static_cast<std::size_t>(shape_numel(shape)), 0.0f) {}

Tensor::Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw ConfigError("tensor shape " + shape_str(shape) + " does not match data length " +
                          std::to_string(data.size()));
}

Tensor Tensor::scalar(float v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape_in) {
    return Tensor(std::move(shape_in));
}

Tensor Tensor::full(std::vector<std::int64_t> shape_in, float v) {
    Tensor t(std::move(shape_in));
    for (auto& x : t.data) x = v;
    return t;
}

std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(data.size());
}

bool Tensor::same_shape(const Tensor& other) const {
    return shape == other.shape;
}

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

float Tensor::item() const {
    if (data.size() != 1) throw StateError("item() on tensor with numel != 1");
    return data[0];
}

}  // namespace llab
