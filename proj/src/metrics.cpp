#include "pulab/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "pulab/errors.hpp"

namespace pulab {

Label predict_label(double score, double threshold) {
    return score < threshold ? Label::positive : Label::negative;
}

double accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold) {
    if (scores.empty()) throw SpecError("accuracy of an empty set");
    if (scores.size() != labels.size()) {
        throw SpecError("accuracy: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) correct += predict_label(scores[i], threshold) == labels[i];
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

GaussianFit fit_gaussian(const Tensor& X) {
    const std::size_t n = X.rows(), d = X.cols();
    if (X.rank() != 2 || n < 2) throw SpecError("fit_gaussian needs a matrix with at least 2 rows");
    GaussianFit fit{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) fit.mean[j] += X.data[i * d + j];
    for (auto& m : fit.mean) m /= static_cast<double>(n);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered[j] = X.data[i * d + j] - fit.mean[j];
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) fit.cov[a * d + b] += centered[a] * centered[b];
    }
    const double denom = static_cast<double>(n - 1);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            fit.cov[a * d + b] /= denom;
            fit.cov[b * d + a] = fit.cov[a * d + b];
        }
    return fit;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    const std::size_t d = a.dim();
    if (d == 0 || b.dim() != d || a.cov.size() != d * d || b.cov.size() != d * d) {
        throw SpecError("frechet_distance: dimension mismatch");
    }
    using Mat = Eigen::MatrixXd;
    Mat sa = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        a.cov.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Mat sb = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        b.cov.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    sa = 0.5 * (sa + sa.transpose());
    sb = 0.5 * (sb + sb.transpose());

    Eigen::SelfAdjointEigenSolver<Mat> eig_a(sa);
    Eigen::SelfAdjointEigenSolver<Mat> eig_b(sb, Eigen::EigenvaluesOnly);
    if (std::min(eig_a.eigenvalues().minCoeff(), eig_b.eigenvalues().minCoeff()) < 1e-10) {
        sa += 1e-6 * Mat::Identity(sa.rows(), sa.cols());
        sb += 1e-6 * Mat::Identity(sb.rows(), sb.cols());
        eig_a.compute(sa);
    }
    const Eigen::VectorXd root_vals = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat root_a = eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();
    Mat inner = root_a * sb * root_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig_inner(inner, Eigen::EigenvaluesOnly);
    const double trace_root = eig_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double mean_term = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a.mean[j] - b.mean[j];
        mean_term += diff * diff;
    }
    const double fd = mean_term + sa.trace() + sb.trace() - 2.0 * trace_root;
    return std::max(fd, 0.0);
}

RollingSummary rolling_summary(std::span<const MetricsRecord> history, std::size_t last_n) {
    if (last_n == 0) throw SpecError("rolling_summary needs last_n >= 1");
    std::vector<double> values;
    for (auto it = history.rbegin(); it != history.rend() && values.size() < last_n; ++it) {
        if (it->test_accuracy) values.push_back(*it->test_accuracy);
    }
    if (values.size() < last_n) {
        throw SpecError("rolling_summary: need " + std::to_string(last_n) + " evaluated epochs, have " +
                        std::to_string(values.size()));
    }
    std::reverse(values.begin(), values.end());
    RollingSummary s;
    s.count = values.size();
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(values.size()));
    return s;
}

}  // namespace pulab
