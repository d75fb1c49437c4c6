#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cellforge::num {

/// Dense row-major tensor of doubles. All training math runs in 64-bit so
/// finite-difference gradient checks stay tight.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);                      // shape {1, n}
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    // 2-d accessors; rank-1 tensors are treated as a single row.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    void fill(double value);
};

std::string shape_str(const Tensor& t);

}  // namespace cellforge::num
