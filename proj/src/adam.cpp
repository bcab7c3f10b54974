#include "pulab/adam.hpp"

#include <cmath>

#include "pulab/errors.hpp"

namespace pulab {

void adam_step(ParamStore& params, const AdamConfig& c) {
    for (const auto& [name, p] : params.params) {
        if (!p.value.grad) throw UsageError("adam_step: parameter '" + name + "' has no gradient");
    }
    for (auto& [name, p] : params.params) {
        const auto& g = *p.value.grad;
        p.step_count += 1;
        const double t = static_cast<double>(p.step_count);
        const double correction1 = 1.0 - std::pow(c.beta1, t);
        const double correction2 = 1.0 - std::pow(c.beta2, t);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double& m = p.adam_m.data[i];
            double& v = p.adam_v.data[i];
            m = c.beta1 * m + (1.0 - c.beta1) * g[i];
            v = c.beta2 * v + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m / correction1;
            const double v_hat = v / correction2;
            p.value.data[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
        p.value.grad.reset();
    }
}

}  // namespace pulab
