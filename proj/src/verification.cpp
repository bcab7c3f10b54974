#include "pulab/verification.hpp"

#include "pulab/gradcheck.hpp"
#include "pulab/observer_gan.hpp"
#include "pulab/rng.hpp"

namespace pulab {

namespace {

constexpr std::size_t kData = 3;
constexpr std::size_t kLatent = 4;
constexpr std::size_t kBatch = 6;

/// Dense/Normalize/LeakyReLU/ReLU/Dropout/Sigmoid, checked in train mode.
NetworkSpec mixed_classifier() {
    return {{Dense{kData, 5, false}, Normalize{}, Activation{ActivationKind::leaky_relu, 0.2},
             Dense{5, 4, false}, Activation{ActivationKind::relu, 0.0}, Dropout{0.3}, Dense{4, 1, false},
             Activation{ActivationKind::sigmoid, 0.0}}};
}

/// Spectrally-normalized stack, checked in eval mode.
NetworkSpec spectral_classifier() {
    return {{Dense{kData, 5, true}, Activation{ActivationKind::leaky_relu, 0.2}, Dense{5, 4, true},
             Activation{ActivationKind::leaky_relu, 0.2}, Dense{4, 1, true},
             Activation{ActivationKind::sigmoid, 0.0}}};
}

NetworkSpec generator() {
    return {{Dense{kLatent, 6, false}, Normalize{}, Activation{ActivationKind::relu, 0.0}, Dense{6, 5, false},
             Activation{ActivationKind::leaky_relu, 0.2}, Dense{5, kData, false}}};
}

Tensor random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

struct Variant {
    const char* name;
    NetworkSpec spec;
    Mode mode;
};

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double h) {
    Rng rng(seed);
    const Variant variants[] = {{"mixed", mixed_classifier(), Mode::train},
                                {"spectral", spectral_classifier(), Mode::eval}};
    const Tensor x_real = random_batch(kBatch, kData, rng);
    const Tensor x_fake = random_batch(kBatch, kData, rng);
    const Tensor z = random_batch(kBatch, kLatent, rng);
    const std::uint64_t dropout_seed = rng.next_u64();

    std::vector<GradSuiteEntry> out;
    auto record = [&](std::string name, const GradCheckReport& r) {
        out.push_back({std::move(name), r.max_rel_error, r.worst_param, r.checked});
    };

    for (const auto& v : variants) {
        const ForwardOptions opts{v.mode, true};
        ParamStore critic = init_params(v.spec, rng);
        record(std::string("L_D/") + v.name,
               grad_check_report(v.spec, critic,
                                 [&](Tape& t, ParamStore& p) {
                                     Rng drop(dropout_seed);
                                     const Var real = forward(v.spec, p, t.constant(x_real), drop, opts);
                                     const Var fake = forward(v.spec, p, t.constant(x_fake), drop, opts);
                                     return loss_d(real, fake);
                                 },
                                 h, kSuiteGradFloor));
        record(std::string("L_Ob/") + v.name,
               grad_check_report(v.spec, critic,
                                 [&](Tape& t, ParamStore& p) {
                                     Rng drop(dropout_seed);
                                     const Var pos = forward(v.spec, p, t.constant(x_real), drop, opts);
                                     const Var fake = forward(v.spec, p, t.constant(x_fake), drop, opts);
                                     return loss_ob(pos, fake);
                                 },
                                 h, kSuiteGradFloor));

        const NetworkSpec g_spec = generator();
        ParamStore g = init_params(g_spec, rng);
        ParamStore d = init_params(v.spec, rng);
        ParamStore ob = init_params(v.spec, rng);
        record(std::string("L_G/") + v.name,
               grad_check_report(g_spec, g,
                                 [&](Tape& t, ParamStore& p) {
                                     Rng drop(dropout_seed);
                                     const Var x_z = forward(g_spec, p, t.constant(z), drop);
                                     const ForwardOptions frozen{v.mode, false};
                                     const Var d_fake = forward(v.spec, d, x_z, drop, frozen);
                                     const Var ob_fake = forward(v.spec, ob, x_z, drop, frozen);
                                     return loss_g(d_fake, ob_fake);
                                 },
                                 h, kSuiteGradFloor));
    }
    return out;
}

}  // namespace pulab
