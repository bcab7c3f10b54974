#pragma once

#include "pulab/network.hpp"

namespace pulab {

/// Defaults follow the usual DCGAN settings (beta1 = 0.5) at lr = 2e-4.
struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter in `params`, then clears
/// the gradients. Throws UsageError if any parameter has no gradient.
void adam_step(ParamStore& params, const AdamConfig& config);

}  // namespace pulab
