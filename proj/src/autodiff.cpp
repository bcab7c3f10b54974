#include "pulab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pulab/errors.hpp"
#include "pulab/rng.hpp"

namespace pulab {

const Tensor& Var::value() const {
    if (!tape_) throw UsageError("value() on an unbound Var");
    return tape_->value(*this);
}

Var Tape::constant(Tensor value) {
    if (consumed_) throw UsageError("tape already consumed by backward()");
    nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
    return {this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& source) {
    if (consumed_) throw UsageError("tape already consumed by backward()");
    Tensor copy(source.shape, source.data);
    nodes_.push_back(Node{std::move(copy), {}, true, {}, &source});
    return {this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, bool needs_grad, Backprop backprop) {
    if (consumed_) throw UsageError("tape already consumed by backward()");
    nodes_.push_back(Node{std::move(value), {}, needs_grad, std::move(backprop), nullptr});
    return {this, nodes_.size() - 1};
}

std::span<double> Tape::grad(Var v) {
    Node& n = nodes_.at(v.id());
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (consumed_) throw UsageError("backward() called twice on the same tape");
    if (!loss.valid() || &loss.tape() != this || loss.id() >= nodes_.size()) {
        throw UsageError("backward() given a loss detached from this tape");
    }
    if (nodes_[loss.id()].value.size() != 1) {
        throw UsageError("backward() requires a scalar loss, got shape " +
                         shape_string(nodes_[loss.id()].value.shape));
    }
    consumed_ = true;
    grad(loss)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty() || !n.backprop) continue;
        n.backprop(*this, n.grad);
    }
    for (auto& n : nodes_) {
        if (!n.source) continue;
        auto& dst = n.source->grad;
        if (!dst) dst.emplace(n.source->size(), 0.0);
        if (n.grad.empty()) continue;
        for (std::size_t j = 0; j < n.grad.size(); ++j) (*dst)[j] += n.grad[j];
    }
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw SpecError(std::string(op) + " expects a matrix, got shape " + shape_string(t.shape));
    }
}

bool any_needs(Var a) { return a.tape().needs_grad(a); }
bool any_needs(Var a, Var b) { return any_needs(a) || any_needs(b); }

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_matrix(A, "matmul");
    require_matrix(B, "matmul");
    const std::size_t n = A.shape[0], k = A.shape[1], m = B.shape[1];
    if (B.shape[0] != k) {
        throw SpecError("matmul shape mismatch " + shape_string(A.shape) + " x " +
                        shape_string(B.shape));
    }
    Tensor out = Tensor::matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A.data[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = B.data.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    return a.tape().push(std::move(out), any_needs(a, b),
                         [a, b, n, k, m](Tape& t, std::span<const double> g) {
                             const Tensor& A = t.value(a);
                             const Tensor& B = t.value(b);
                             if (t.needs_grad(a)) {
                                 auto ga = t.grad(a);
                                 for (std::size_t i = 0; i < n; ++i) {
                                     const double* grow = g.data() + i * m;
                                     for (std::size_t p = 0; p < k; ++p) {
                                         const double* brow = B.data.data() + p * m;
                                         double s = 0.0;
                                         for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
                                         ga[i * k + p] += s;
                                     }
                                 }
                             }
                             if (t.needs_grad(b)) {
                                 auto gb = t.grad(b);
                                 for (std::size_t i = 0; i < n; ++i) {
                                     const double* grow = g.data() + i * m;
                                     for (std::size_t p = 0; p < k; ++p) {
                                         const double aip = A.data[i * k + p];
                                         if (aip == 0.0) continue;
                                         double* gbrow = gb.data() + p * m;
                                         for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                                     }
                                 }
                             }
                         });
}

Var add_row_vector(Var x, Var bias) {
    const Tensor& X = x.value();
    const Tensor& b = bias.value();
    require_matrix(X, "add_row_vector");
    const std::size_t n = X.shape[0], m = X.shape[1];
    if (b.size() != m) {
        throw SpecError("bias of size " + std::to_string(b.size()) + " for " + std::to_string(m) +
                        " columns");
    }
    Tensor out = X;
    out.grad.reset();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += b.data[j];
    return x.tape().push(std::move(out), any_needs(x, bias),
                         [x, bias, n, m](Tape& t, std::span<const double> g) {
                             if (t.needs_grad(x)) {
                                 auto gx = t.grad(x);
                                 for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                             }
                             if (t.needs_grad(bias)) {
                                 auto gb = t.grad(bias);
                                 for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                             }
                         });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape != B.shape) {
        throw SpecError("add shape mismatch " + shape_string(A.shape) + " vs " +
                        shape_string(B.shape));
    }
    Tensor out(A.shape, A.data);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    return a.tape().push(std::move(out), any_needs(a, b), [a, b](Tape& t, std::span<const double> g) {
        for (Var v : {a, b}) {
            if (!t.needs_grad(v)) continue;
            auto gv = t.grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

Var scale(Var x, double factor) {
    Tensor out(x.value().shape, x.value().data);
    for (auto& v : out.data) v *= factor;
    return x.tape().push(std::move(out), any_needs(x), [x, factor](Tape& t, std::span<const double> g) {
        auto gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

Var relu(Var x) { return leaky_relu(x, 0.0); }

Var leaky_relu(Var x, double slope) {
    Tensor out(x.value().shape, x.value().data);
    for (auto& v : out.data) v = v > 0.0 ? v : slope * v;
    return x.tape().push(std::move(out), any_needs(x), [x, slope](Tape& t, std::span<const double> g) {
        const Tensor& X = t.value(x);
        auto gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += X.data[i] > 0.0 ? g[i] : slope * g[i];
    });
}

Var sigmoid(Var x) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    Tensor out(x.value().shape, x.value().data);
    for (auto& v : out.data) {
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        v = std::clamp(s, lo, hi);
    }
    const std::size_t self = x.tape().size();
    return x.tape().push(std::move(out), any_needs(x), [x, self](Tape& t, std::span<const double> g) {
        const Tensor& S = t.value(Var(&t, self));
        auto gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * S.data[i] * (1.0 - S.data[i]);
    });
}

Var dropout(Var x, double rate, Rng& rng) {
    if (!(rate > 0.0 && rate < 1.0)) throw SpecError("dropout rate must lie in (0, 1)");
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value().size());
    for (auto& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    Tensor out(x.value().shape, x.value().data);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
    return x.tape().push(std::move(out), any_needs(x),
                         [x, mask = std::move(mask)](Tape& t, std::span<const double> g) {
                             auto gx = t.grad(x);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchMoments* moments) {
    const Tensor& X = x.value();
    require_matrix(X, "batch_norm");
    const std::size_t n = X.shape[0], m = X.shape[1];
    if (gamma.value().size() != m || beta.value().size() != m) {
        throw SpecError("batch_norm affine parameters do not match feature count");
    }
    std::vector<double> mean(m, 0.0), var(m, 0.0), inv_std(m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) mean[j] += X.data[i * m + j];
    for (auto& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double d = X.data[i * m + j] - mean[j];
            var[j] += d * d;
        }
    for (auto& v : var) v /= static_cast<double>(n);
    for (std::size_t j = 0; j < m; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

    Tensor xhat = Tensor::matrix(n, m);
    Tensor out = Tensor::matrix(n, m);
    const auto& G = gamma.value().data;
    const auto& B = beta.value().data;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double h = (X.data[i * m + j] - mean[j]) * inv_std[j];
            xhat.data[i * m + j] = h;
            out.data[i * m + j] = G[j] * h + B[j];
        }
    if (moments) *moments = BatchMoments{mean, var};

    const bool needs = any_needs(x) || any_needs(gamma, beta);
    return x.tape().push(
        std::move(out), needs,
        [x, gamma, beta, n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Tape& t, std::span<const double> g) {
            const auto& Gm = t.value(gamma).data;
            if (t.needs_grad(gamma)) {
                auto gg = t.grad(gamma);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) gg[j] += g[i * m + j] * xhat.data[i * m + j];
            }
            if (t.needs_grad(beta)) {
                auto gb = t.grad(beta);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
            }
            if (t.needs_grad(x)) {
                auto gx = t.grad(x);
                std::vector<double> sum_d(m, 0.0), sum_dh(m, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        const double d = g[i * m + j] * Gm[j];
                        sum_d[j] += d;
                        sum_dh[j] += d * xhat.data[i * m + j];
                    }
                const double nn = static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        const double d = g[i * m + j] * Gm[j];
                        gx[i * m + j] +=
                            inv_std[j] / nn * (nn * d - sum_d[j] - xhat.data[i * m + j] * sum_dh[j]);
                    }
            }
        });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> mean,
                    std::span<const double> var, double eps) {
    const Tensor& X = x.value();
    require_matrix(X, "batch_norm");
    const std::size_t n = X.shape[0], m = X.shape[1];
    if (gamma.value().size() != m || beta.value().size() != m || mean.size() != m ||
        var.size() != m) {
        throw SpecError("batch_norm statistics do not match feature count");
    }
    std::vector<double> shift(mean.begin(), mean.end()), inv_std(m);
    for (std::size_t j = 0; j < m; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    Tensor out = Tensor::matrix(n, m);
    const auto& G = gamma.value().data;
    const auto& B = beta.value().data;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out.data[i * m + j] = G[j] * (X.data[i * m + j] - shift[j]) * inv_std[j] + B[j];

    const bool needs = any_needs(x) || any_needs(gamma, beta);
    return x.tape().push(
        std::move(out), needs,
        [x, gamma, beta, n, m, shift = std::move(shift), inv_std = std::move(inv_std)](
            Tape& t, std::span<const double> g) {
            const auto& X = t.value(x).data;
            const auto& Gm = t.value(gamma).data;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double gij = g[i * m + j];
                    const double h = (X[i * m + j] - shift[j]) * inv_std[j];
                    if (t.needs_grad(gamma)) t.grad(gamma)[j] += gij * h;
                    if (t.needs_grad(beta)) t.grad(beta)[j] += gij;
                    if (t.needs_grad(x)) t.grad(x)[i * m + j] += gij * Gm[j] * inv_std[j];
                }
        });
}

Var spectral_scale(Var weight, std::span<const double> u, double sigma_floor) {
    const Tensor& W = weight.value();
    require_matrix(W, "spectral_scale");
    const std::size_t rows = W.shape[0], cols = W.shape[1];
    if (u.size() != cols) throw SpecError("spectral norm vector does not match weight columns");
    std::vector<double> wu(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) wu[i] += W.data[i * cols + j] * u[j];
    double sigma = 0.0;
    for (double v : wu) sigma += v * v;
    sigma = std::sqrt(sigma);
    const bool floored = !(sigma >= sigma_floor);
    if (floored) sigma = sigma_floor;
    Tensor out(W.shape, W.data);
    for (auto& v : out.data) v /= sigma;

    std::vector<double> v_vec = wu, u_vec(u.begin(), u.end());
    for (auto& v : v_vec) v /= sigma;
    return weight.tape().push(
        std::move(out), any_needs(weight),
        [weight, rows, cols, sigma, floored, v_vec = std::move(v_vec), u_vec = std::move(u_vec)](
            Tape& t, std::span<const double> g) {
            const auto& Wd = t.value(weight).data;
            auto gw = t.grad(weight);
            double inner = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * Wd[i];
            const double coupling = floored ? 0.0 : inner / (sigma * sigma);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    gw[i * cols + j] += g[i * cols + j] / sigma - coupling * v_vec[i] * u_vec[j];
        });
}

Var bce_mean(Var yhat, std::span<const double> targets, double clip, std::span<const double> weights) {
    const Tensor& P = yhat.value();
    if (targets.size() != P.size()) {
        throw SpecError("bce: " + std::to_string(P.size()) + " predictions vs " +
                        std::to_string(targets.size()) + " targets");
    }
    if (!weights.empty() && weights.size() != P.size()) throw SpecError("bce: weight count mismatch");
    for (double y : targets) {
        if (y != 0.0 && y != 1.0) throw SpecError("bce targets must be 0 or 1");
    }
    std::vector<double> w(P.size(), 1.0);
    if (!weights.empty()) w.assign(weights.begin(), weights.end());
    const double n = static_cast<double>(P.size());
    double total = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const double p = std::clamp(P.data[i], clip, 1.0 - clip);
        total -= w[i] * (targets[i] == 1.0 ? std::log(p) : std::log1p(-p));
    }
    std::vector<double> y(targets.begin(), targets.end());
    return yhat.tape().push(
        Tensor({1}, std::vector<double>{total / n}), any_needs(yhat),
        [yhat, clip, n, y = std::move(y), w = std::move(w)](Tape& t, std::span<const double> g) {
            const auto& Pd = t.value(yhat).data;
            auto gp = t.grad(yhat);
            for (std::size_t i = 0; i < Pd.size(); ++i) {
                const double p = Pd[i];
                if (p < clip || p > 1.0 - clip) continue;
                const double d = y[i] == 1.0 ? -1.0 / p : 1.0 / (1.0 - p);
                gp[i] += g[0] * w[i] * d / n;
            }
        });
}

}  // namespace pulab
