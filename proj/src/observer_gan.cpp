#include "pulab/observer_gan.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "pulab/errors.hpp"
#include "pulab/loss.hpp"

namespace pulab {

void validate(const TrainConfig& cfg, std::size_t data_dim) {
    if (cfg.batch_k < 1) throw SpecError("batch_k must be >= 1");
    if (cfg.latent_dim < 1) throw SpecError("latent_dim must be >= 1");
    if (cfg.eval_every < 1) throw SpecError("eval_every must be >= 1");
    if (cfg.fd_samples < 2) throw SpecError("fd_samples must be >= 2");
    if (!(cfg.lr > 0.0)) throw SpecError("lr must be positive");
    validate(cfg.g_spec);
    validate(cfg.d_spec, true);
    validate(cfg.ob_spec, true);
    if (cfg.g_spec.input_dim() != cfg.latent_dim) {
        throw SpecError("generator input dim " + std::to_string(cfg.g_spec.input_dim()) +
                        " != latent_dim " + std::to_string(cfg.latent_dim));
    }
    if (cfg.g_spec.output_dim() != data_dim || cfg.d_spec.input_dim() != data_dim ||
        cfg.ob_spec.input_dim() != data_dim) {
        throw SpecError("generator output, discriminator input and observer input must all equal the data dim " +
                        std::to_string(data_dim));
    }
    if (cfg.d_spec.output_dim() != 1 || cfg.ob_spec.output_dim() != 1) {
        throw SpecError("discriminator and observer must have a single output");
    }
}

Var loss_d(Var d_real, Var d_fake) { return add(bce(d_real, 1.0), bce(d_fake, 0.0)); }
Var loss_ob(Var ob_pos, Var ob_fake) { return add(bce(ob_pos, 0.0), bce(ob_fake, 1.0)); }
Var loss_g(Var d_fake, Var ob_fake) { return add(bce(d_fake, 1.0), bce(ob_fake, 1.0)); }

namespace {

template <class F>
double eval_pair(const Tensor& a, const Tensor& b, F f) {
    if (a.shape != b.shape) {
        throw SpecError("loss inputs differ in shape: " + shape_string(a.shape) + " vs " +
                        shape_string(b.shape));
    }
    Tape t;
    return f(t.constant(Tensor(a.shape, a.data)), t.constant(Tensor(b.shape, b.data))).value().data[0];
}

void check_finite(double loss, const char* name, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(loss)) {
        throw NumericError(std::string("non-finite ") + name + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch));
    }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    return idx;
}

}  // namespace

double loss_d(const Tensor& d_real, const Tensor& d_fake) {
    return eval_pair(d_real, d_fake, [](Var a, Var b) { return loss_d(a, b); });
}
double loss_ob(const Tensor& ob_pos, const Tensor& ob_fake) {
    return eval_pair(ob_pos, ob_fake, [](Var a, Var b) { return loss_ob(a, b); });
}
double loss_g(const Tensor& d_fake, const Tensor& ob_fake) {
    return eval_pair(d_fake, ob_fake, [](Var a, Var b) { return loss_g(a, b); });
}

Tensor sample_latent(std::size_t rows, std::size_t latent_dim, Rng& rng) {
    Tensor z = Tensor::matrix(rows, latent_dim);
    for (auto& v : z.data) v = rng.normal();
    return z;
}

ObserverGanState init_state(const TrainConfig& cfg) {
    Rng init_rng(derive_seed(cfg.seed, "init"));
    ObserverGanState s;
    s.g = init_params(cfg.g_spec, init_rng);
    s.d = init_params(cfg.d_spec, init_rng);
    s.ob = init_params(cfg.ob_spec, init_rng);
    s.data_rng = Rng(derive_seed(cfg.seed, "data"));
    s.latent_rng = Rng(derive_seed(cfg.seed, "latent"));
    s.dropout_rng = Rng(derive_seed(cfg.seed, "dropout"));
    s.reinit_rng = Rng(derive_seed(cfg.seed, "reinit"));
    s.eval_rng = Rng(derive_seed(cfg.seed, "eval"));
    return s;
}

MetricsRecord train_epoch(ObserverGanState& s, const PUView& data, const TrainConfig& cfg) {
    const Tensor& xu_all = *data.x_u;
    const Tensor& xp_all = *data.x_p;
    const std::size_t k = cfg.batch_k;
    const std::size_t batches = std::min(xu_all.rows(), xp_all.rows()) / k;
    if (batches == 0) {
        throw SpecError("batch_k " + std::to_string(k) + " exceeds the smaller training pool");
    }
    const std::size_t epoch = s.epoch + 1;
    const AdamConfig adam = cfg.adam();
    auto notify = [&](Network n) {
        if (s.on_update) s.on_update(n);
    };

    const auto perm_u = shuffled_indices(xu_all.rows(), s.data_rng);
    const auto perm_p = shuffled_indices(xp_all.rows(), s.data_rng);

    MetricsRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::span<const std::size_t> iu(perm_u.data() + b * k, k);
        const std::span<const std::size_t> ip(perm_p.data() + b * k, k);
        const Tensor x_u = gather_rows(xu_all, iu);
        const Tensor x_p = gather_rows(xp_all, ip);
        const Tensor z = sample_latent(k, cfg.latent_dim, s.latent_rng);

        try {
            Tape g_tape;
            const Var x_z = forward(cfg.g_spec, s.g, g_tape.constant(z), s.dropout_rng);
            const Tensor x_z_value(x_z.value().shape, x_z.value().data);

            double ld = 0.0;
            {
                Tape t;
                const Var real = forward(cfg.d_spec, s.d, t.constant(x_u), s.dropout_rng);
                const Var fake = forward(cfg.d_spec, s.d, t.constant(x_z_value), s.dropout_rng);
                const Var loss = loss_d(real, fake);
                ld = loss.value().data[0];
                check_finite(ld, "L_D", epoch, b);
                t.backward(loss);
                adam_step(s.d, adam);
                notify(Network::discriminator);
            }

            double lob = 0.0;
            {
                Tape t;
                const Var pos = forward(cfg.ob_spec, s.ob, t.constant(x_p), s.dropout_rng);
                const Var fake = forward(cfg.ob_spec, s.ob, t.constant(x_z_value), s.dropout_rng);
                const Var loss = loss_ob(pos, fake);
                lob = loss.value().data[0];
                check_finite(lob, "L_Ob", epoch, b);
                t.backward(loss);
                adam_step(s.ob, adam);
                notify(Network::observer);
            }

            const ForwardOptions frozen{Mode::train, false};
            const Var d_fake = forward(cfg.d_spec, s.d, x_z, s.dropout_rng, frozen);
            const Var ob_fake = forward(cfg.ob_spec, s.ob, x_z, s.dropout_rng, frozen);
            const Var lg_var = loss_g(d_fake, ob_fake);
            const double lg = lg_var.value().data[0];
            check_finite(lg, "L_G", epoch, b);
            g_tape.backward(lg_var);
            adam_step(s.g, adam);
            notify(Network::generator);

            rec.loss_d += ld;
            rec.loss_ob += lob;
            rec.loss_g += lg;
        } catch (const NumericError& e) {
            const std::string msg = e.what();
            if (msg.find("at epoch") != std::string::npos) throw;
            throw NumericError(msg + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
        }
    }
    const double n = static_cast<double>(batches);
    rec.loss_d /= n;
    rec.loss_ob /= n;
    rec.loss_g /= n;
    s.epoch = epoch;
    return rec;
}

void evaluate(ObserverGanState& s, const PUView& data, const TrainConfig& cfg, MetricsRecord& rec) {
    const Classification c = classify(s.ob, cfg.ob_spec, data.test->features);
    rec.test_accuracy = accuracy(c.scores, data.test->labels);

    if (!s.fit_u) s.fit_u = fit_gaussian(*data.x_u);
    if (!s.fit_p) s.fit_p = fit_gaussian(*data.x_p);
    const Tensor z = sample_latent(cfg.fd_samples, cfg.latent_dim, s.eval_rng);
    const GaussianFit gen = fit_gaussian(predict(cfg.g_spec, s.g, z));
    rec.fd_gen_unlabeled = frechet_distance(gen, *s.fit_u);
    rec.fd_gen_positive = frechet_distance(gen, *s.fit_p);
}

MetricsRecord run_epoch(ObserverGanState& s, const PUView& data, const TrainConfig& cfg) {
    const std::size_t epoch = s.epoch + 1;
    if (cfg.reinit_period > 0 && epoch % cfg.reinit_period == 0) {
        reinit(cfg.ob_spec, s.ob, s.reinit_rng);
        s.reinit_epochs.push_back(epoch);
    }
    MetricsRecord rec = train_epoch(s, data, cfg);
    if (epoch % cfg.eval_every == 0) evaluate(s, data, cfg, rec);
    return rec;
}

TrainResult train(const TrainConfig& cfg, const PUView& data, const EpochCallback& on_epoch) {
    validate(cfg, data.dim());
    TrainResult result{.history = {}, .observer = {}, .state = init_state(cfg)};
    result.history.reserve(cfg.epochs);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        result.history.push_back(run_epoch(result.state, data, cfg));
        if (on_epoch) on_epoch(result.history.back(), result.state);
    }
    result.observer = result.state.ob;
    return result;
}

Classification classify(ParamStore& observer, const NetworkSpec& spec, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != spec.input_dim()) {
        throw SpecError("classify: input shape " + shape_string(x.shape) + " does not match observer input dim " +
                        std::to_string(spec.input_dim()));
    }
    const Tensor out = predict(spec, observer, x);
    Classification c;
    c.scores = out.data;
    c.labels.reserve(c.scores.size());
    for (double s : c.scores) c.labels.push_back(predict_label(s));
    return c;
}

}  // namespace pulab
