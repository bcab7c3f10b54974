#pragma once

#include <cmath>
#include <vector>

#include "pulab/network.hpp"
#include "pulab/rng.hpp"
#include "pulab/tensor.hpp"

namespace testing {

inline pulab::Tensor random_matrix(std::size_t rows, std::size_t cols, pulab::Rng& rng, double scale = 1.0) {
    pulab::Tensor t = pulab::Tensor::matrix(rows, cols);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
