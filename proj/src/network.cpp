#include "pulab/network.hpp"

#include <cmath>
#include <string>

#include "pulab/errors.hpp"
#include "pulab/rng.hpp"

namespace pulab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* layer_kind(const Layer& layer) {
    return std::visit(overloaded{[](const Dense&) { return "Dense"; },
                                 [](const Activation& a) {
                                     switch (a.kind) {
                                         case ActivationKind::relu: return "ReLU";
                                         case ActivationKind::leaky_relu: return "LeakyReLU";
                                         case ActivationKind::sigmoid: return "Sigmoid";
                                     }
                                     return "Activation";
                                 },
                                 [](const Dropout&) { return "Dropout"; },
                                 [](const Normalize&) { return "Normalize"; }},
                      layer);
}

/// Whether the Dense layer at `index` feeds a rectifier (skipping Normalize/Dropout).
bool feeds_rectifier(const NetworkSpec& spec, std::size_t index) {
    for (std::size_t j = index + 1; j < spec.layers.size(); ++j) {
        const Layer& l = spec.layers[j];
        if (std::holds_alternative<Normalize>(l) || std::holds_alternative<Dropout>(l)) continue;
        if (const auto* a = std::get_if<Activation>(&l)) return a->kind != ActivationKind::sigmoid;
        return false;
    }
    return false;
}

std::vector<double> random_unit_vector(std::size_t n, Rng& rng) {
    std::vector<double> u(n);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (auto& v : u) {
            v = rng.normal();
            norm += v * v;
        }
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
    return u;
}

Param make_param(Tensor value) {
    Param p;
    p.adam_m = Tensor(value.shape, 0.0);
    p.adam_v = Tensor(value.shape, 0.0);
    p.value = std::move(value);
    return p;
}

}  // namespace

std::size_t NetworkSpec::input_dim() const {
    for (const auto& l : layers)
        if (const auto* d = std::get_if<Dense>(&l)) return d->in_dim;
    return 0;
}

std::size_t NetworkSpec::output_dim() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
        if (const auto* d = std::get_if<Dense>(&*it)) return d->out_dim;
    return 0;
}

bool NetworkSpec::ends_with_sigmoid() const {
    if (layers.empty()) return false;
    const auto* a = std::get_if<Activation>(&layers.back());
    return a && a->kind == ActivationKind::sigmoid;
}

void validate(const NetworkSpec& spec, bool classifier) {
    std::size_t width = 0;
    bool seen_dense = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (const auto* d = std::get_if<Dense>(&l)) {
            if (d->in_dim == 0 || d->out_dim == 0) {
                throw SpecError("layer " + std::to_string(i) + ": Dense dims must be positive");
            }
            if (seen_dense && d->in_dim != width) {
                throw SpecError("layer " + std::to_string(i) + ": Dense in_dim " +
                                std::to_string(d->in_dim) + " does not match previous out_dim " +
                                std::to_string(width));
            }
            seen_dense = true;
            width = d->out_dim;
        } else if (!seen_dense) {
            throw SpecError("layer " + std::to_string(i) + ": " + layer_kind(l) +
                            " before the first Dense layer");
        } else if (const auto* dr = std::get_if<Dropout>(&l)) {
            if (!(dr->rate > 0.0 && dr->rate < 1.0)) {
                throw SpecError("layer " + std::to_string(i) + ": dropout rate must lie in (0, 1)");
            }
        } else if (const auto* nz = std::get_if<Normalize>(&l)) {
            if (!(nz->momentum >= 0.0 && nz->momentum < 1.0) || !(nz->eps > 0.0)) {
                throw SpecError("layer " + std::to_string(i) + ": invalid Normalize settings");
            }
        }
    }
    if (!seen_dense) throw SpecError("network needs at least one Dense layer");
    if (classifier && !spec.ends_with_sigmoid()) {
        throw SpecError("classifier network must end with a Sigmoid layer");
    }
}

NetworkSpec make_mlp(std::size_t in_dim, std::size_t out_dim, const MlpOptions& o) {
    NetworkSpec spec;
    std::size_t width = in_dim;
    for (std::size_t i = 0; i < o.hidden.size(); ++i) {
        spec.layers.emplace_back(Dense{width, o.hidden[i], o.spectral_norm});
        if (o.batch_norm) spec.layers.emplace_back(Normalize{});
        spec.layers.emplace_back(Activation{o.hidden_activation, o.leaky_slope});
        width = o.hidden[i];
    }
    if (o.dropout > 0.0 && !o.hidden.empty()) spec.layers.emplace_back(Dropout{o.dropout});
    spec.layers.emplace_back(Dense{width, out_dim, o.spectral_norm});
    if (o.sigmoid_head) spec.layers.emplace_back(Activation{ActivationKind::sigmoid, 0.0});
    validate(spec, o.sigmoid_head);
    return spec;
}

Param& ParamStore::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw SpecError("no parameter named '" + name + "'");
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw SpecError("no parameter named '" + name + "'");
    return it->second;
}

double ParamStore::max_abs_grad() const {
    double m = 0.0;
    for (const auto& [_, p] : params) {
        if (!p.value.grad) continue;
        for (double g : *p.value.grad) m = std::max(m, std::abs(g));
    }
    return m;
}

void ParamStore::clear_grads() {
    for (auto& [_, p] : params) p.value.grad.reset();
}

bool ParamStore::same_state(const ParamStore& other) const {
    if (buffers != other.buffers || params.size() != other.params.size()) return false;
    for (const auto& [name, p] : params) {
        auto it = other.params.find(name);
        if (it == other.params.end()) return false;
        const Param& q = it->second;
        if (!p.value.same_values(q.value) || !p.adam_m.same_values(q.adam_m) ||
            !p.adam_v.same_values(q.adam_v) || p.step_count != q.step_count || p.sn_u != q.sn_u) {
            return false;
        }
    }
    return true;
}

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }
std::string gamma_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".gamma"; }
std::string beta_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".beta"; }
std::string running_mean_name(std::size_t layer) {
    return "layer" + std::to_string(layer) + ".running_mean";
}
std::string running_var_name(std::size_t layer) {
    return "layer" + std::to_string(layer) + ".running_var";
}

ParamStore init_params(const NetworkSpec& spec, Rng& rng) {
    validate(spec);
    ParamStore store;
    std::size_t width = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (const auto* d = std::get_if<Dense>(&l)) {
            const double fan_in = static_cast<double>(d->in_dim);
            const double fan_out = static_cast<double>(d->out_dim);
            const double bound = feeds_rectifier(spec, i) ? std::sqrt(6.0 / fan_in)
                                                           : std::sqrt(6.0 / (fan_in + fan_out));
            Tensor w = Tensor::matrix(d->in_dim, d->out_dim);
            for (auto& v : w.data) v = rng.uniform(-bound, bound);
            Param wp = make_param(std::move(w));
            if (d->spectral_norm) wp.sn_u = random_unit_vector(d->out_dim, rng);
            store.params.emplace(weight_name(i), std::move(wp));
            store.params.emplace(bias_name(i), make_param(Tensor({d->out_dim}, 0.0)));
            width = d->out_dim;
        } else if (std::holds_alternative<Normalize>(l)) {
            store.params.emplace(gamma_name(i), make_param(Tensor({width}, 1.0)));
            store.params.emplace(beta_name(i), make_param(Tensor({width}, 0.0)));
            store.buffers.emplace(running_mean_name(i), std::vector<double>(width, 0.0));
            store.buffers.emplace(running_var_name(i), std::vector<double>(width, 1.0));
        }
    }
    return store;
}

void reinit(const NetworkSpec& spec, ParamStore& params, Rng& rng) {
    params = init_params(spec, rng);
}

Var forward(const NetworkSpec& spec, ParamStore& params, Var input, Rng& rng,
            ForwardOptions options) {
    const Tensor& x = input.value();
    if (x.rank() != 2 || x.shape[1] != spec.input_dim()) {
        throw SpecError("forward: batch shape " + shape_string(x.shape) + " does not match input dim " +
                        std::to_string(spec.input_dim()));
    }
    Tape& tape = input.tape();
    const bool train = options.mode == Mode::train;
    auto bind = [&](Param& p) {
        return options.track ? tape.parameter(p.value) : tape.constant(Tensor(p.value.shape, p.value.data));
    };

    Var h = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (const auto* d = std::get_if<Dense>(&l)) {
            Param& wp = params.at(weight_name(i));
            Var w = bind(wp);
            if (d->spectral_norm) {
                if (!wp.sn_u) throw SpecError("layer " + std::to_string(i) + ": missing spectral-norm vector");
                if (train) power_iteration(wp.value, *wp.sn_u);
                w = spectral_scale(w, *wp.sn_u, kSigmaFloor);
            }
            h = add_row_vector(matmul(h, w), bind(params.at(bias_name(i))));
        } else if (const auto* a = std::get_if<Activation>(&l)) {
            switch (a->kind) {
                case ActivationKind::relu: h = relu(h); break;
                case ActivationKind::leaky_relu: h = leaky_relu(h, a->slope); break;
                case ActivationKind::sigmoid: h = sigmoid(h); break;
            }
        } else if (const auto* dr = std::get_if<Dropout>(&l)) {
            if (train) h = dropout(h, dr->rate, rng);
        } else if (const auto* nz = std::get_if<Normalize>(&l)) {
            Var gamma = bind(params.at(gamma_name(i)));
            Var beta = bind(params.at(beta_name(i)));
            auto& rmean = params.buffers.at(running_mean_name(i));
            auto& rvar = params.buffers.at(running_var_name(i));
            if (train) {
                BatchMoments m;
                h = batch_norm_train(h, gamma, beta, nz->eps, &m);
                const double n = static_cast<double>(h.value().rows());
                const double correction = n > 1.0 ? n / (n - 1.0) : 1.0;
                for (std::size_t j = 0; j < rmean.size(); ++j) {
                    rmean[j] = nz->momentum * rmean[j] + (1.0 - nz->momentum) * m.mean[j];
                    rvar[j] = nz->momentum * rvar[j] + (1.0 - nz->momentum) * m.var[j] * correction;
                }
            } else {
                h = batch_norm_eval(h, gamma, beta, rmean, rvar, nz->eps);
            }
        }
        if (!h.value().all_finite()) {
            throw NumericError("non-finite value after layer " + std::to_string(i) + " (" +
                               layer_kind(l) + ")");
        }
    }
    return h;
}

Tensor predict(const NetworkSpec& spec, ParamStore& params, const Tensor& batch) {
    Tape tape;
    Rng unused(0);
    Var out = forward(spec, params, tape.constant(Tensor(batch.shape, batch.data)), unused,
                      {Mode::eval, false});
    return Tensor(out.value().shape, out.value().data);
}

double spectral_sigma(const Tensor& weight, std::span<const double> u) {
    const std::size_t rows = weight.rows(), cols = weight.cols();
    if (u.size() != cols) throw SpecError("spectral norm vector does not match weight columns");
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < cols; ++j) r += weight.data[i * cols + j] * u[j];
        s += r * r;
    }
    s = std::sqrt(s);
    return s >= kSigmaFloor ? s : kSigmaFloor;
}

double power_iteration(const Tensor& weight, std::vector<double>& u) {
    if (weight.rank() != 2) throw SpecError("spectral normalization expects a matrix");
    const std::size_t rows = weight.rows(), cols = weight.cols();
    if (u.size() != cols) throw SpecError("spectral norm vector does not match weight columns");
    std::vector<double> v(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) v[i] += weight.data[i * cols + j] * u[j];
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn > 0.0) {
        std::vector<double> next(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) next[j] += weight.data[i * cols + j] * v[i];
        double un = 0.0;
        for (double x : next) un += x * x;
        un = std::sqrt(un);
        if (un > 0.0) {
            for (std::size_t j = 0; j < cols; ++j) u[j] = next[j] / un;
        }
    }
    return spectral_sigma(weight, u);
}

Tensor spectral_normalize(const Tensor& weight, std::vector<double>& u) {
    const double sigma = power_iteration(weight, u);
    Tensor out(weight.shape, weight.data);
    for (auto& v : out.data) v /= sigma;
    return out;
}

}  // namespace pulab
