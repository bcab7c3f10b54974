#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "pulab/tensor.hpp"

namespace pulab {

class Rng;
class Tape;

/// Handle to a node recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Linear record of a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep visits every
/// node after all of its consumers. A tape supports exactly one backward pass.
class Tape {
public:
    /// Receives the gradient of the node's output and accumulates into its parents.
    using Backprop = std::function<void(Tape&, std::span<const double> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// A leaf that never receives a gradient.
    Var constant(Tensor value);

    /// A leaf bound to `source`. After backward(), the leaf's gradient is added
    /// into `source.grad` (allocated as zeros when absent). `source` must
    /// outlive the backward pass.
    Var parameter(Tensor& source);

    /// Append an interior node. `needs_grad` should be true when any parent needs one.
    Var push(Tensor value, bool needs_grad, Backprop backprop);

    const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
    bool needs_grad(Var v) const { return nodes_.at(v.id()).needs_grad; }

    /// Gradient accumulator of a node, zero-allocated on first access.
    std::span<double> grad(Var v);

    /// Reverse sweep from a scalar `loss`. Throws UsageError if the tape has
    /// already been consumed or the loss is not a one-element node of this tape.
    void backward(Var loss);

    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool needs_grad = false;
        Backprop backprop;
        Tensor* source = nullptr;
    };

    std::deque<Node> nodes_;
    bool consumed_ = false;
};

// Differentiable operations. All matrices are (rows, cols) row-major.

/// (n, k) x (k, m) -> (n, m).
Var matmul(Var a, Var b);
/// Add a length-m vector to each row of an (n, m) matrix.
Var add_row_vector(Var x, Var bias);
/// Elementwise sum of same-shaped nodes.
Var add(Var a, Var b);
Var scale(Var x, double factor);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
/// Logistic function. Outputs are clamped into the open interval (0, 1).
Var sigmoid(Var x);

/// Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).
Var dropout(Var x, double rate, Rng& rng);

struct BatchMoments {
    std::vector<double> mean;
    std::vector<double> var;  // biased (divide by n)
};

/// Feature-wise normalization with statistics of the current batch, followed
/// by the affine map gamma * xhat + beta. `moments` receives the batch statistics.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchMoments* moments);

/// Same affine map using fixed statistics (eval mode).
Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> mean,
                    std::span<const double> var, double eps);

/// W / sigma with sigma = ||W u|| for a fixed unit vector u (length = cols of W).
/// The gradient includes d(sigma)/dW = v u^T with v = W u / sigma, holding u fixed.
/// sigma is floored at `sigma_floor`, below which it is treated as constant.
Var spectral_scale(Var weight, std::span<const double> u, double sigma_floor);

/// Mean binary cross-entropy of probabilities against 0/1 targets, each term
/// scaled by `weights[i]` when weights are given (divisor stays the entry count).
/// Probabilities are clipped to [clip, 1 - clip]; the clip has zero gradient.
Var bce_mean(Var yhat, std::span<const double> targets, double clip,
             std::span<const double> weights = {});

}  // namespace pulab
