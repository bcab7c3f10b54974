#pragma once

#include <span>

#include "pulab/autodiff.hpp"
#include "pulab/tensor.hpp"

namespace pulab {

/// Probabilities are clipped to [kBceClip, 1 - kBceClip] before taking logs.
constexpr double kBceClip = 1e-7;

/// H(yhat, y) = -y log(yhat) - (1 - y) log(1 - yhat), averaged over all
/// entries. Targets must be exactly 0 or 1.
Var bce(Var yhat, std::span<const double> targets);

/// Per-entry weighted BCE: sum_i w_i H_i / n.
Var bce(Var yhat, std::span<const double> targets, std::span<const double> weights);

/// BCE against a constant target for every entry.
Var bce(Var yhat, double target);

/// Value-only evaluation on plain tensors.
double bce(const Tensor& yhat, const Tensor& targets);

}  // namespace pulab
