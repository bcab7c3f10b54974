#pragma once

#include <functional>
#include <string>

#include "pulab/network.hpp"

namespace pulab {

/// Builds a scalar loss on `tape` from the current contents of `params`.
/// Must be deterministic: seed any dropout Rng inside the builder.
using LossBuilder = std::function<Var(Tape& tape, ParamStore& params)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Default denominator floor of the relative error.
constexpr double kGradCheckFloor = 1e-8;

/// Floor used by the layer-kind suite. Central differences at h = 1e-5 resolve
/// a gradient only to about eps * |loss| / h ~ 1e-11, so entries whose true
/// gradient vanishes (a bias feeding batch norm) are held to an absolute 1e-10
/// instead of a ratio of two round-off terms.
constexpr double kSuiteGradFloor = 1e-6;

/// Compare analytic gradients of `build` against central differences of step h.
///
/// Error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// Buffers and spectral-norm vectors are restored before every evaluation, so
/// train-mode builders are allowed. Throws UsageError if two evaluations of
/// the unperturbed loss differ. `params` is left with its original values and
/// no gradients.
GradCheckReport grad_check_report(const NetworkSpec& spec, ParamStore& params,
                                  const LossBuilder& build, double h = 1e-5,
                                  double floor = kGradCheckFloor);

double grad_check(const NetworkSpec& spec, ParamStore& params, const LossBuilder& build,
                  double h = 1e-5, double floor = kGradCheckFloor);

}  // namespace pulab
