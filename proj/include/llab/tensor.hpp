#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace llab {

// Dense row-major float32 tensor. Rank 0 (empty shape) is a scalar with one
// element. Reductions accumulate in double; storage stays float.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape_in);
    Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in);

    static Tensor scalar(float v);
    static Tensor zeros(std::vector<std::int64_t> shape_in);
    static Tensor full(std::vector<std::int64_t> shape_in, float v);

    std::int64_t numel() const;
    bool same_shape(const Tensor& other) const;
    bool all_finite() const;

    float& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    float at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // Scalar accessor; requires numel() == 1.
    float item() const;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

}  // namespace llab
