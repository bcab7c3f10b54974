#include "pulab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pulab/errors.hpp"
#include "pulab/loss.hpp"

namespace pulab {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    return idx;
}

double test_accuracy(const NetworkSpec& spec, ParamStore& classifier, const LabeledPool& test) {
    const Classification c = classify(classifier, spec, test.features);
    return accuracy(c.scores, test.labels);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw SpecError("concat_rows: column mismatch");
    Tensor out = Tensor::matrix(a.rows() + b.rows(), a.cols());
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

/// Supervised loop shared by the naive and oracle baselines.
BaselineResult supervised_run(std::string method, const Tensor& positives, const Tensor& negatives,
                              const LabeledPool& test, const TrainConfig& cfg, double positive_weight,
                              const RecordCallback& on_record) {
    validate(cfg.d_spec, true);
    if (cfg.d_spec.input_dim() != positives.cols()) {
        throw SpecError("classifier input dim does not match data dim");
    }
    Rng init_rng(derive_seed(cfg.seed, "init"));
    Rng data_rng(derive_seed(cfg.seed, "data"));
    Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
    BaselineResult r{.method = std::move(method),
                     .history = {},
                     .classifier_spec = cfg.d_spec,
                     .classifier = init_params(cfg.d_spec, init_rng),
                     .checkpoint_histories = {}};
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        MetricsRecord rec;
        rec.epoch = e;
        rec.loss_ob = train_classifier_epoch(cfg.d_spec, r.classifier, positives, negatives, cfg, data_rng,
                                             dropout_rng, positive_weight);
        if (e % cfg.eval_every == 0) rec.test_accuracy = test_accuracy(cfg.d_spec, r.classifier, test);
        r.history.push_back(rec);
        if (on_record) on_record(rec);
    }
    return r;
}

}  // namespace

Var dgan_loss_d(Var d_unlabeled, Var d_positive, Var d_fake, double positive_weight) {
    return add(bce(d_unlabeled, 1.0),
               add(scale(bce(d_positive, 0.0), positive_weight), scale(bce(d_fake, 0.0), 1.0 - positive_weight)));
}

double train_classifier_epoch(const NetworkSpec& spec, ParamStore& classifier, const Tensor& positives,
                              const Tensor& negatives, const TrainConfig& cfg, Rng& data_rng,
                              Rng& dropout_rng, double positive_weight) {
    const std::size_t k = cfg.batch_k;
    const std::size_t n_pos = positives.rows();
    const Tensor pooled = concat_rows(positives, negatives);
    const std::size_t batches = pooled.rows() / k;
    if (batches == 0) throw SpecError("batch_k exceeds the pooled training set");
    const auto perm = shuffled(pooled.rows(), data_rng);
    const AdamConfig adam = cfg.adam();
    std::vector<double> targets(k), weights(k);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::span<const std::size_t> idx(perm.data() + b * k, k);
        for (std::size_t i = 0; i < k; ++i) {
            const bool positive = idx[i] < n_pos;
            targets[i] = positive ? 0.0 : 1.0;
            weights[i] = positive ? positive_weight : 1.0;
        }
        Tape t;
        const Var out = forward(spec, classifier, t.constant(gather_rows(pooled, idx)), dropout_rng);
        const Var loss = bce(out, targets, weights);
        const double v = loss.value().data[0];
        if (!std::isfinite(v)) throw NumericError("non-finite classifier loss at batch " + std::to_string(b));
        t.backward(loss);
        adam_step(classifier, adam);
        total += v;
    }
    return total / static_cast<double>(batches);
}

std::vector<MetricsRecord> train_dgan_stage2(const Tensor& x_p, const Tensor& pseudo_negatives,
                                             const LabeledPool& test, const TrainConfig& cfg,
                                             const BaselineConfig& bcfg, std::size_t first_epoch,
                                             ParamStore& classifier) {
    Rng init_rng(derive_seed(cfg.seed, "stage2/init"));
    Rng data_rng(derive_seed(cfg.seed, "stage2/data"));
    Rng dropout_rng(derive_seed(cfg.seed, "stage2/dropout"));
    classifier = init_params(cfg.d_spec, init_rng);
    std::vector<MetricsRecord> history;
    for (std::size_t e = 0; e < bcfg.stage2_epochs; ++e) {
        MetricsRecord rec;
        rec.epoch = first_epoch + e;
        rec.loss_ob = train_classifier_epoch(cfg.d_spec, classifier, x_p, pseudo_negatives, cfg, data_rng,
                                             dropout_rng);
        if ((e + 1) % cfg.eval_every == 0) rec.test_accuracy = test_accuracy(cfg.d_spec, classifier, test);
        history.push_back(rec);
    }
    return history;
}

BaselineResult train_dgan(const PUView& data, const TrainConfig& cfg, const BaselineConfig& bcfg,
                          const RecordCallback& on_record) {
    validate(cfg, data.dim());
    if (!(bcfg.dgan_positive_weight >= 0.0 && bcfg.dgan_positive_weight <= 1.0)) {
        throw SpecError("dgan_positive_weight must lie in [0, 1]");
    }
    std::vector<std::size_t> checkpoints = bcfg.dgan_checkpoints;
    if (checkpoints.empty()) checkpoints.push_back(cfg.epochs);
    for (auto c : checkpoints) {
        if (c < 1 || c > cfg.epochs) throw SpecError("D-GAN checkpoint epoch outside [1, epochs]");
    }

    ObserverGanState s = init_state(cfg);
    const Tensor& xu_all = *data.x_u;
    const Tensor& xp_all = *data.x_p;
    const std::size_t k = cfg.batch_k;
    const std::size_t batches = std::min(xu_all.rows(), xp_all.rows()) / k;
    if (batches == 0) throw SpecError("batch_k exceeds the smaller training pool");
    const AdamConfig adam = cfg.adam();
    const double w = bcfg.dgan_positive_weight;

    BaselineResult r{.method = "dgan", .history = {}, .classifier_spec = cfg.d_spec, .classifier = {},
                     .checkpoint_histories = {}};
    std::map<std::size_t, ParamStore> snapshots;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto perm_u = shuffled(xu_all.rows(), s.data_rng);
        const auto perm_p = shuffled(xp_all.rows(), s.data_rng);
        MetricsRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < batches; ++b) {
            const Tensor x_u = gather_rows(xu_all, std::span<const std::size_t>(perm_u.data() + b * k, k));
            const Tensor x_p = gather_rows(xp_all, std::span<const std::size_t>(perm_p.data() + b * k, k));
            const Tensor z = sample_latent(k, cfg.latent_dim, s.latent_rng);

            Tape g_tape;
            const Var x_z = forward(cfg.g_spec, s.g, g_tape.constant(z), s.dropout_rng);
            const Tensor x_z_value(x_z.value().shape, x_z.value().data);
            {
                Tape t;
                const Var du = forward(cfg.d_spec, s.d, t.constant(x_u), s.dropout_rng);
                const Var dp = forward(cfg.d_spec, s.d, t.constant(x_p), s.dropout_rng);
                const Var df = forward(cfg.d_spec, s.d, t.constant(x_z_value), s.dropout_rng);
                const Var loss = dgan_loss_d(du, dp, df, w);
                rec.loss_d += loss.value().data[0];
                t.backward(loss);
                adam_step(s.d, adam);
            }
            const Var df = forward(cfg.d_spec, s.d, x_z, s.dropout_rng, {Mode::train, false});
            const Var lg = bce(df, 1.0);
            rec.loss_g += lg.value().data[0];
            g_tape.backward(lg);
            adam_step(s.g, adam);
        }
        rec.loss_d /= static_cast<double>(batches);
        rec.loss_g /= static_cast<double>(batches);
        if (!std::isfinite(rec.loss_d) || !std::isfinite(rec.loss_g)) {
            throw NumericError("non-finite D-GAN loss at epoch " + std::to_string(epoch));
        }
        s.epoch = epoch;
        if (epoch % cfg.eval_every == 0) {
            if (!s.fit_u) s.fit_u = fit_gaussian(xu_all);
            if (!s.fit_p) s.fit_p = fit_gaussian(xp_all);
            const GaussianFit gen =
                fit_gaussian(predict(cfg.g_spec, s.g, sample_latent(cfg.fd_samples, cfg.latent_dim, s.eval_rng)));
            rec.fd_gen_unlabeled = frechet_distance(gen, *s.fit_u);
            rec.fd_gen_positive = frechet_distance(gen, *s.fit_p);
        }
        r.history.push_back(rec);
        if (on_record) on_record(rec);
        if (std::find(checkpoints.begin(), checkpoints.end(), epoch) != checkpoints.end()) {
            snapshots.emplace(epoch, s.g);
        }
    }

    // Stage 2: never touches x_u.
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const std::size_t c = checkpoints[i];
        Rng neg_rng(derive_seed(cfg.seed, "stage2/negatives/" + std::to_string(c)));
        const Tensor negatives = predict(cfg.g_spec, snapshots.at(c), sample_latent(xp_all.rows(), cfg.latent_dim, neg_rng));
        ParamStore classifier;
        auto hist = train_dgan_stage2(xp_all, negatives, *data.test, cfg, bcfg, cfg.epochs + 1, classifier);
        if (i + 1 == checkpoints.size()) {
            r.history.insert(r.history.end(), hist.begin(), hist.end());
            if (on_record) {
                for (const auto& rec : hist) on_record(rec);
            }
            r.classifier = std::move(classifier);
        }
        r.checkpoint_histories[c] = std::move(hist);
    }
    return r;
}

BaselineResult train_naive_pu(const PUView& data, const TrainConfig& cfg, const BaselineConfig& bcfg,
                              const RecordCallback& on_record) {
    return supervised_run("naive_pu", *data.x_p, *data.x_u, *data.test, cfg, bcfg.naive_positive_weight, on_record);
}

BaselineResult train_supervised_oracle(const PUDataset& data, const TrainConfig& cfg,
                                       const RecordCallback& on_record) {
    const auto& hidden = data.hidden_u_labels();
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < hidden.size(); ++i) (hidden[i] == Label::positive ? pos : neg).push_back(i);
    Tensor positives = data.x_p;
    if (!pos.empty()) positives = concat_rows(data.x_p, gather_rows(data.x_u, pos));
    if (neg.empty()) throw SpecError("oracle needs at least one negative in x_u");
    const Tensor negatives = gather_rows(data.x_u, neg);
    return supervised_run("oracle", positives, negatives, data.test, cfg, 1.0, on_record);
}

}  // namespace pulab
