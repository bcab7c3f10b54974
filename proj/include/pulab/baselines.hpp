#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pulab/observer_gan.hpp"

namespace pulab {

struct BaselineConfig {
    /// Stage-2 classifier epochs for D-GAN.
    std::size_t stage2_epochs = 100;
    /// Stage-1 epochs whose generator feeds a stage-2 classifier; empty means
    /// the final generator only. The last entry supplies the reported history.
    std::vector<std::size_t> dgan_checkpoints;
    /// Weight of the positive source within the "class 0" term of the D-GAN
    /// discriminator loss; generated samples get 1 - weight.
    double dgan_positive_weight = 0.5;
    /// Weight on the positive term of the naive classifier loss (1 = unweighted).
    double naive_positive_weight = 1.0;
};

/// Receives each history record as soon as it is final.
using RecordCallback = std::function<void(const MetricsRecord&)>;

struct BaselineResult {
    std::string method;
    std::vector<MetricsRecord> history;
    NetworkSpec classifier_spec;
    ParamStore classifier;
    /// Stage-2 history per D-GAN checkpoint epoch.
    std::map<std::size_t, std::vector<MetricsRecord>> checkpoint_histories;
};

/// D-GAN stage-1 discriminator loss:
/// E[H(D(x_U), 1)] + w E[H(D(x_P), 0)] + (1 - w) E[H(D(G(z)), 0)].
Var dgan_loss_d(Var d_unlabeled, Var d_positive, Var d_fake, double positive_weight);

/// Trains `classifier` for one epoch over the pooled rows of `positives`
/// (target 0) and `negatives` (target 1): floor((|pos| + |neg|) / k) minibatches
/// drawn without replacement, so each row carries equal weight apart from
/// `positive_weight` on positive terms. Returns the mean loss.
double train_classifier_epoch(const NetworkSpec& spec, ParamStore& classifier, const Tensor& positives,
                              const Tensor& negatives, const TrainConfig& cfg, Rng& data_rng,
                              Rng& dropout_rng, double positive_weight = 1.0);

/// Stage 2 of D-GAN. Sees only the labeled positives and generated negatives.
std::vector<MetricsRecord> train_dgan_stage2(const Tensor& x_p, const Tensor& pseudo_negatives,
                                             const LabeledPool& test, const TrainConfig& cfg,
                                             const BaselineConfig& bcfg, std::size_t first_epoch,
                                             ParamStore& classifier);

/// Two-stage D-GAN: a GAN whose discriminator separates X_U from X_P and
/// G(z), then a classifier on X_P versus |X_P| generated samples.
BaselineResult train_dgan(const PUView& data, const TrainConfig& cfg, const BaselineConfig& bcfg = {},
                          const RecordCallback& on_record = {});

/// Treats all of X_U as negative.
BaselineResult train_naive_pu(const PUView& data, const TrainConfig& cfg, const BaselineConfig& bcfg = {},
                              const RecordCallback& on_record = {});

/// Upper bound trained on the true labels of X_P and X_U.
BaselineResult train_supervised_oracle(const PUDataset& data, const TrainConfig& cfg,
                                       const RecordCallback& on_record = {});

}  // namespace pulab
