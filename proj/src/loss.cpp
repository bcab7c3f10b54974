#include "pulab/loss.hpp"

#include <vector>

#include "pulab/errors.hpp"

namespace pulab {

Var bce(Var yhat, std::span<const double> targets) { return bce_mean(yhat, targets, kBceClip); }

Var bce(Var yhat, std::span<const double> targets, std::span<const double> weights) {
    return bce_mean(yhat, targets, kBceClip, weights);
}

Var bce(Var yhat, double target) {
    const std::vector<double> targets(yhat.value().size(), target);
    return bce_mean(yhat, targets, kBceClip);
}

double bce(const Tensor& yhat, const Tensor& targets) {
    if (yhat.shape != targets.shape) {
        throw SpecError("bce shape mismatch " + shape_string(yhat.shape) + " vs " +
                        shape_string(targets.shape));
    }
    Tape tape;
    return bce(tape.constant(Tensor(yhat.shape, yhat.data)), targets.data).value().data[0];
}

}  // namespace pulab
