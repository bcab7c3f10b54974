#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pulab/adam.hpp"
#include "pulab/metrics.hpp"
#include "pulab/network.hpp"
#include "pulab/pu_split.hpp"
#include "pulab/rng.hpp"

namespace pulab {

/// Hyperparameters of one training run.
///
/// Defaults: latent size 100, minibatch 64, Adam at 2e-4, observer reset
/// every 100 epochs.
struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_k = 64;
    std::size_t latent_dim = 100;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    std::size_t reinit_period = 100;  // 0 disables observer resets
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    std::size_t fd_samples = 512;

    NetworkSpec g_spec;
    NetworkSpec d_spec;
    NetworkSpec ob_spec;

    AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, 1e-8}; }
};

/// Throws SpecError unless the config is usable with data of width `data_dim`.
void validate(const TrainConfig& cfg, std::size_t data_dim);

// Losses ----------------------------------------------------------------------

/// E[H(D(x_U), 1)] + E[H(D(G(z)), 0)].
Var loss_d(Var d_real, Var d_fake);
/// E[H(Ob(x_P), 0)] + E[H(Ob(G(z)), 1)].
Var loss_ob(Var ob_pos, Var ob_fake);
/// E[H(D(G(z)), 1)] + E[H(Ob(G(z)), 1)].
Var loss_g(Var d_fake, Var ob_fake);

double loss_d(const Tensor& d_real, const Tensor& d_fake);
double loss_ob(const Tensor& ob_pos, const Tensor& ob_fake);
double loss_g(const Tensor& d_fake, const Tensor& ob_fake);

// Training state --------------------------------------------------------------

enum class Network { generator, discriminator, observer };

/// Everything that evolves during a run. Each random stream is derived from
/// the run seed, so evaluation draws never shift the training sequence.
struct ObserverGanState {
    ParamStore g;
    ParamStore d;
    ParamStore ob;
    Rng data_rng;
    Rng latent_rng;
    Rng dropout_rng;
    Rng reinit_rng;
    Rng eval_rng;
    std::size_t epoch = 0;  // completed epochs
    std::vector<std::size_t> reinit_epochs;

    /// Called after each parameter write, in update order.
    std::function<void(Network)> on_update;

    std::optional<GaussianFit> fit_u;
    std::optional<GaussianFit> fit_p;
};

ObserverGanState init_state(const TrainConfig& cfg);

/// One pass of floor(min(|X_U|, |X_P|) / k) minibatches. Each minibatch draws
/// x_U, x_P and z, computes x_z = G(z) once, then updates D by L_D, Ob by
/// L_Ob, and G by L_G, each loss evaluated with the current parameters.
/// Returns the mean losses; evaluation fields are left empty.
MetricsRecord train_epoch(ObserverGanState& state, const PUView& data, const TrainConfig& cfg);

/// Test accuracy of the observer and Frechet distances of cfg.fd_samples
/// generated points to X_U and X_P.
void evaluate(ObserverGanState& state, const PUView& data, const TrainConfig& cfg,
              MetricsRecord& record);

/// Observer reset check, train_epoch, and evaluation on eval_every epochs.
MetricsRecord run_epoch(ObserverGanState& state, const PUView& data, const TrainConfig& cfg);

struct TrainResult {
    std::vector<MetricsRecord> history;
    ParamStore observer;
    ObserverGanState state;
};

using EpochCallback = std::function<void(const MetricsRecord&, const ObserverGanState&)>;

TrainResult train(const TrainConfig& cfg, const PUView& data, const EpochCallback& on_epoch = {});

// Inference -------------------------------------------------------------------

struct Classification {
    std::vector<Label> labels;
    std::vector<double> scores;  // probability of the negative class
};

/// Eval-mode forward; positive iff score < 0.5.
Classification classify(ParamStore& observer, const NetworkSpec& spec, const Tensor& x);

/// Standard-normal latent batch.
Tensor sample_latent(std::size_t rows, std::size_t latent_dim, Rng& rng);

}  // namespace pulab
