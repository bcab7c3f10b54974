#include "pulab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pulab/errors.hpp"

namespace pulab {

namespace {

void restore_state(ParamStore& params, const ParamStore& snapshot) {
    params.buffers = snapshot.buffers;
    for (auto& [name, p] : params.params) p.sn_u = snapshot.params.at(name).sn_u;
}

double evaluate(ParamStore& params, const ParamStore& snapshot, const LossBuilder& build) {
    restore_state(params, snapshot);
    Tape tape;
    Var loss = build(tape, params);
    if (loss.value().size() != 1) throw UsageError("grad_check: loss builder must return a scalar");
    return loss.value().data[0];
}

}  // namespace

GradCheckReport grad_check_report(const NetworkSpec& spec, ParamStore& params,
                                  const LossBuilder& build, double h, double floor) {
    validate(spec);
    if (!(h > 0.0)) throw SpecError("grad_check step must be positive");
    if (!(floor > 0.0)) throw SpecError("grad_check floor must be positive");
    const ParamStore snapshot = params;
    params.clear_grads();

    const double first = evaluate(params, snapshot, build);
    const double second = evaluate(params, snapshot, build);
    if (first != second) {
        restore_state(params, snapshot);
        throw UsageError("grad_check: loss builder is not deterministic");
    }

    restore_state(params, snapshot);
    {
        Tape tape;
        Var loss = build(tape, params);
        tape.backward(loss);
    }

    GradCheckReport report;
    for (auto& [name, p] : params.params) {
        const std::vector<double> analytic =
            p.value.grad ? *p.value.grad : std::vector<double>(p.value.size(), 0.0);
        p.value.grad.reset();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double original = p.value.data[i];
            p.value.data[i] = original + h;
            const double plus = evaluate(params, snapshot, build);
            p.value.data[i] = original - h;
            const double minus = evaluate(params, snapshot, build);
            p.value.data[i] = original;
            const double numeric = (plus - minus) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
            const double err = std::abs(analytic[i] - numeric) / denom;
            ++report.checked;
            if (report.worst_param.empty() || err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = name;
                report.worst_index = i;
            }
        }
    }
    restore_state(params, snapshot);
    params.clear_grads();
    return report;
}

double grad_check(const NetworkSpec& spec, ParamStore& params, const LossBuilder& build, double h,
                  double floor) {
    return grad_check_report(spec, params, build, h, floor).max_rel_error;
}

}  // namespace pulab
