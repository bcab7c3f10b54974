#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pulab/datasets.hpp"
#include "pulab/tensor.hpp"

namespace pulab {

/// One row of per-epoch training output. Evaluation fields are empty on
/// epochs where no evaluation ran.
struct MetricsRecord {
    std::size_t epoch = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double loss_ob = 0.0;
    std::optional<double> test_accuracy;
    std::optional<double> fd_gen_unlabeled;
    std::optional<double> fd_gen_positive;

    bool operator==(const MetricsRecord&) const = default;
};

/// Scores are probabilities of the negative class: a sample is predicted
/// positive iff score < threshold, so a tie goes to negative.
Label predict_label(double score, double threshold = 0.5);

/// Fraction of correct predictions under predict_label.
double accuracy(std::span<const double> scores, std::span<const Label> labels,
                double threshold = 0.5);

struct GaussianFit {
    std::vector<double> mean;
    std::vector<double> cov;  // d x d row-major, symmetric
    std::size_t dim() const noexcept { return mean.size(); }
};

/// Sample mean and unbiased covariance of the rows of X (n >= 2).
GaussianFit fit_gaussian(const Tensor& X);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the trace of the
/// root taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}. If either
/// covariance has an eigenvalue below 1e-10, 1e-6 I is added to both.
/// Negative round-off is clamped to 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

struct RollingSummary {
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t count = 0;
};

/// Mean and population std of test accuracy over the final `last_n`
/// evaluated records. Throws SpecError when fewer exist.
RollingSummary rolling_summary(std::span<const MetricsRecord> history, std::size_t last_n);

}  // namespace pulab
