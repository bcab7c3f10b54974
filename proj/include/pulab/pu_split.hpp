#pragma once

#include <cstddef>
#include <vector>

#include "pulab/datasets.hpp"

namespace pulab {

class Rng;

/// The training-facing side of a PU dataset: no access to the hidden labels
/// of the unlabeled set.
struct PUView {
    const Tensor* x_p = nullptr;
    const Tensor* x_u = nullptr;
    const LabeledPool* test = nullptr;
    double alpha = 0.0;

    std::size_t dim() const { return x_p->cols(); }
};

/// Positive set, unlabeled mixture, and a class-balanced labeled test pool.
class PUDataset {
public:
    Tensor x_p;
    Tensor x_u;
    LabeledPool test;
    double alpha = 0.0;

    /// Row indices into the source pool, for provenance checks.
    std::vector<std::size_t> p_source;
    std::vector<std::size_t> u_source;
    std::vector<std::size_t> test_source;

    PUView view() const { return {&x_p, &x_u, &test, alpha}; }

    /// Ground truth of x_u. Only the supervised oracle and evaluation code may read this.
    const std::vector<Label>& hidden_u_labels() const { return hidden_u_labels_; }

private:
    std::vector<Label> hidden_u_labels_;

    friend PUDataset make_pu_split(const LabeledPool&, double, std::size_t, std::size_t, std::size_t,
                                   Rng&);
};

/// Number of positives placed in an unlabeled set of size n_u: round(alpha *
/// n_u), ties to even.
std::size_t unlabeled_positive_count(double alpha, std::size_t n_u);

/// SCAR split. x_p is a uniform draw of n_p positives; x_u holds
/// unlabeled_positive_count(alpha, n_u) further positives plus negatives, shuffled;
/// the test pool has n_test / 2 of each class. All draws are disjoint by
/// source row. n_test must be even.
PUDataset make_pu_split(const LabeledPool& pool, double alpha, std::size_t n_p, std::size_t n_u,
                        std::size_t n_test, Rng& rng);

}  // namespace pulab
