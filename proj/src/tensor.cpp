#include "pulab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "pulab/errors.hpp"

namespace pulab {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    for (auto d : shape) {
        if (d == 0) throw SpecError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(element_count(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values)
    : shape(std::move(shape_)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
        throw SpecError("tensor of shape " + shape_string(shape) + " given " +
                        std::to_string(data.size()) + " values");
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw SpecError("from_rows needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> values;
    values.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw SpecError("ragged rows in from_rows");
        values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(values));
}

std::size_t Tensor::cols() const noexcept {
    if (shape.size() <= 1) return 1;
    return std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>{});
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> indices) {
    if (indices.empty()) throw SpecError("gather_rows needs at least one index");
    const std::size_t c = m.cols();
    Tensor out = Tensor::matrix(indices.size(), c);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) throw SpecError("gather_rows index out of range");
        std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return out;
}

}  // namespace pulab
