#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pulab/autodiff.hpp"
#include "pulab/tensor.hpp"

namespace pulab {

class Rng;

// ---------------------------------------------------------------------------
// Declarative layer list
// ---------------------------------------------------------------------------

struct Dense {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    bool spectral_norm = false;
};

enum class ActivationKind { relu, leaky_relu, sigmoid };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
    double slope = 0.2;  // LeakyReLU only
};

struct Dropout {
    double rate = 0.5;
};

/// Feature-wise batch normalization with running statistics for eval mode.
struct Normalize {
    double momentum = 0.9;  // weight kept on the old running estimate
    double eps = 1e-5;
};

using Layer = std::variant<Dense, Activation, Dropout, Normalize>;

struct NetworkSpec {
    std::vector<Layer> layers;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    bool ends_with_sigmoid() const;
};

/// Throws SpecError unless Dense dims chain, at least one Dense exists, every
/// Normalize follows a Dense, and (for classifiers) the last layer is Sigmoid.
void validate(const NetworkSpec& spec, bool classifier = false);

/// Plain multilayer perceptron: Dense -> [Normalize] -> act, ..., Dense [-> Sigmoid].
struct MlpOptions {
    std::vector<std::size_t> hidden;
    ActivationKind hidden_activation = ActivationKind::leaky_relu;
    double leaky_slope = 0.2;
    bool spectral_norm = false;
    bool batch_norm = false;
    double dropout = 0.0;  // applied after the last hidden activation when > 0
    bool sigmoid_head = true;
};
NetworkSpec make_mlp(std::size_t in_dim, std::size_t out_dim, const MlpOptions& options);

// ---------------------------------------------------------------------------
// Parameters and optimizer state
// ---------------------------------------------------------------------------

struct Param {
    Tensor value;  // value.grad holds the accumulated gradient, when present
    Tensor adam_m;
    Tensor adam_v;
    std::int64_t step_count = 0;
    std::optional<std::vector<double>> sn_u;  // unit vector, one per spectrally-normalized weight
};

/// Named parameters plus non-trainable buffers (batch-norm running statistics).
struct ParamStore {
    std::map<std::string, Param> params;
    std::map<std::string, std::vector<double>> buffers;

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params.count(name) != 0; }

    /// Largest |grad| over all parameters; 0 when no gradient is present.
    double max_abs_grad() const;
    void clear_grads();
    /// Exact equality of values, optimizer state, and buffers.
    bool same_state(const ParamStore& other) const;
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);
std::string gamma_name(std::size_t layer);
std::string beta_name(std::size_t layer);
std::string running_mean_name(std::size_t layer);
std::string running_var_name(std::size_t layer);

/// Fresh parameters. Dense weights feeding ReLU/LeakyReLU use He-uniform
/// (bound sqrt(6 / fan_in)), all others Xavier-uniform (bound
/// sqrt(6 / (fan_in + fan_out))); biases and beta zero, gamma one; running
/// mean 0 and variance 1. Draw order: per layer, weight row-major, then sn_u.
ParamStore init_params(const NetworkSpec& spec, Rng& rng);

/// Redraw `params` exactly as init_params(spec, rng) would, resetting Adam
/// moments, step counts, and buffers.
void reinit(const NetworkSpec& spec, ParamStore& params, Rng& rng);

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

enum class Mode { train, eval };

struct ForwardOptions {
    Mode mode = Mode::train;
    /// When false the parameters enter the tape as constants, so no gradient
    /// reaches this store.
    bool track = true;
};

/// Run the network on a (k, in_dim) batch recorded on `input`'s tape.
///
/// Train mode samples dropout masks from `rng`, uses batch statistics (and
/// updates running estimates), and advances each spectral-norm vector by one
/// power-iteration step. Eval mode mutates nothing.
Var forward(const NetworkSpec& spec, ParamStore& params, Var input, Rng& rng,
            ForwardOptions options = {});

/// Eval-mode forward on a throwaway tape.
Tensor predict(const NetworkSpec& spec, ParamStore& params, const Tensor& batch);

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

constexpr double kSigmaFloor = 1e-12;

/// One power-iteration step on `u` (length = cols of `weight`), updating it in place.
/// Returns the estimate sigma = ||W u|| after the step, floored at kSigmaFloor.
double power_iteration(const Tensor& weight, std::vector<double>& u);

/// sigma = ||W u|| for the current u, floored at kSigmaFloor.
double spectral_sigma(const Tensor& weight, std::span<const double> u);

/// W / sigma after one power-iteration step on `u`.
Tensor spectral_normalize(const Tensor& weight, std::vector<double>& u);

}  // namespace pulab
