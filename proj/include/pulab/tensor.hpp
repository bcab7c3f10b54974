#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pulab {

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Most tensors in this library are matrices (batch, features); vectors use a
/// single dimension. `data.size()` always equals the product of `shape`.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::optional<std::vector<double>> grad;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape_, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    /// Leading dimension (1 for scalars).
    std::size_t rows() const noexcept { return shape.empty() ? 1 : shape.front(); }
    /// Product of trailing dimensions.
    std::size_t cols() const noexcept;

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols(), cols()};
    }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }

    bool all_finite() const noexcept;
    /// Values and shape only; the gradient buffer is ignored.
    bool same_values(const Tensor& other) const noexcept {
        return shape == other.shape && data == other.data;
    }
};

std::string shape_string(std::span<const std::size_t> shape);

/// Gather rows `indices` of a matrix into a new (indices.size(), cols) matrix.
Tensor gather_rows(const Tensor& m, std::span<const std::size_t> indices);

}  // namespace pulab
