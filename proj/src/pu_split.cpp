#include "pulab/pu_split.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "pulab/errors.hpp"
#include "pulab/rng.hpp"

namespace pulab {

std::size_t unlabeled_positive_count(double alpha, std::size_t n_u) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw SpecError("alpha must lie in [0, 1]");
    // nearbyint honours the default FE_TONEAREST mode: half-to-even.
    return static_cast<std::size_t>(std::nearbyint(alpha * static_cast<double>(n_u)));
}

PUDataset make_pu_split(const LabeledPool& pool, double alpha, std::size_t n_p, std::size_t n_u,
                        std::size_t n_test, Rng& rng) {
    if (pool.features.rows() != pool.size()) throw SpecError("pool rows and labels disagree");
    if (n_test % 2 != 0) throw SpecError("n_test must be even for a class-balanced test set");
    const std::size_t u_pos = unlabeled_positive_count(alpha, n_u);
    const std::size_t u_neg = n_u - u_pos;
    const std::size_t half_test = n_test / 2;

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        (pool.labels[i] == Label::positive ? pos : neg).push_back(i);
    }
    const std::size_t need_pos = n_p + u_pos + half_test;
    const std::size_t need_neg = u_neg + half_test;
    if (pos.size() < need_pos || neg.size() < need_neg) {
        throw SpecError("insufficient samples for split: need " + std::to_string(need_pos) +
                        " positives and " + std::to_string(need_neg) + " negatives, pool has " +
                        std::to_string(pos.size()) + " and " + std::to_string(neg.size()));
    }
    if (n_p == 0 || n_u == 0) throw SpecError("n_p and n_u must be positive");

    rng.shuffle(std::span<std::size_t>(pos));
    rng.shuffle(std::span<std::size_t>(neg));

    PUDataset ds;
    ds.alpha = alpha;
    ds.p_source.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_p));

    auto pos_it = pos.begin() + static_cast<std::ptrdiff_t>(n_p);
    ds.u_source.assign(pos_it, pos_it + static_cast<std::ptrdiff_t>(u_pos));
    ds.u_source.insert(ds.u_source.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(u_neg));
    rng.shuffle(std::span<std::size_t>(ds.u_source));

    pos_it += static_cast<std::ptrdiff_t>(u_pos);
    auto neg_it = neg.begin() + static_cast<std::ptrdiff_t>(u_neg);
    ds.test_source.assign(pos_it, pos_it + static_cast<std::ptrdiff_t>(half_test));
    ds.test_source.insert(ds.test_source.end(), neg_it, neg_it + static_cast<std::ptrdiff_t>(half_test));
    rng.shuffle(std::span<std::size_t>(ds.test_source));

    ds.x_p = gather_rows(pool.features, ds.p_source);
    ds.x_u = gather_rows(pool.features, ds.u_source);
    for (auto i : ds.u_source) ds.hidden_u_labels_.push_back(pool.labels[i]);
    if (half_test > 0) {
        ds.test.features = gather_rows(pool.features, ds.test_source);
        for (auto i : ds.test_source) ds.test.labels.push_back(pool.labels[i]);
    }
    return ds;
}

}  // namespace pulab
