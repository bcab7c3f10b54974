#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pulab {

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
};

/// Finite-difference check of every layer kind under L_D, L_Ob and L_G on
/// small random three-layer networks. One entry per (loss, network) pair.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 7, double h = 1e-5);

}  // namespace pulab
