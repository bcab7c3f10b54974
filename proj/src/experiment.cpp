#include "pulab/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pulab/rng.hpp"

namespace pulab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON source positions -----------------------------------------------------------

std::string escape_pointer_token(const std::string& token) {
    std::string out;
    for (char c : token) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

/// Line of every object key and array element of a syntactically valid
/// document, keyed by JSON pointer.
std::map<std::string, int> locate_keys(std::string_view text) {
    struct Frame {
        bool object;
        std::string path;
        std::size_t index = 0;
        std::string key;
    };
    std::map<std::string, int> lines;
    std::vector<Frame> stack;
    int line = 1;
    bool expect_key = false;

    auto child_path = [&]() {
        const Frame& f = stack.back();
        return f.path + "/" + (f.object ? escape_pointer_token(f.key) : std::to_string(f.index));
    };
    auto value_starts = [&]() {
        if (!stack.empty() && !stack.back().object) lines.emplace(child_path(), line);
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
        } else if (c == '"') {
            std::string s;
            for (++i; i < text.size() && text[i] != '"'; ++i) {
                if (text[i] == '\\') ++i;
                if (i < text.size()) s += text[i];
            }
            if (!stack.empty() && stack.back().object && expect_key) {
                stack.back().key = s;
                lines.emplace(child_path(), line);
                expect_key = false;
            } else {
                value_starts();
            }
        } else if (c == '{' || c == '[') {
            value_starts();
            std::string path = stack.empty() ? std::string{} : child_path();
            stack.push_back({c == '{', std::move(path), 0, {}});
            expect_key = c == '{';
        } else if (c == '}' || c == ']') {
            if (!stack.empty()) stack.pop_back();
            expect_key = false;
        } else if (c == ',') {
            if (!stack.empty()) {
                if (stack.back().object) {
                    expect_key = true;
                } else {
                    ++stack.back().index;
                }
            }
        } else if (c != ':' && c != ' ' && c != '\t' && c != '\r') {
            value_starts();
            while (i + 1 < text.size() && std::string_view(",]} \t\r\n").find(text[i + 1]) == std::string_view::npos) ++i;
        }
    }
    return lines;
}

std::string dotted(const std::string& pointer) {
    std::string out;
    std::size_t pos = 1;
    while (pos <= pointer.size() && !pointer.empty()) {
        const std::size_t next = std::min(pointer.find('/', pos), pointer.size());
        const std::string token = pointer.substr(pos, next - pos);
        if (!token.empty() && std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            out += "[" + token + "]";
        } else {
            out += (out.empty() ? "" : ".") + token;
        }
        pos = next + 1;
    }
    return out.empty() ? "<root>" : out;
}

struct Context {
    std::string source;
    std::map<std::string, int> lines;

    int line_of(std::string pointer) const {
        while (true) {
            auto it = lines.find(pointer);
            if (it != lines.end()) return it->second;
            if (pointer.empty()) return 1;
            pointer.erase(pointer.rfind('/'));
        }
    }

    [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
        const int line = line_of(pointer);
        throw ConfigError(source + ":" + std::to_string(line) + ": " + dotted(pointer) + ": " + message, line);
    }
};

/// Typed access to one JSON object; finish() rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string pointer, const Context& ctx)
        : j_(j), pointer_(std::move(pointer)), ctx_(ctx) {
        if (!j_.is_object()) ctx_.fail(pointer_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string at(const std::string& key) const { return pointer_ + "/" + escape_pointer_token(key); }
    const Context& ctx() const { return ctx_; }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& required(const std::string& key) {
        const json* v = raw(key);
        if (!v) ctx_.fail(pointer_, "missing required key '" + key + "'");
        return *v;
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (const json* v = raw(key)) out = convert<T>(*v, at(key));
    }

    template <class T>
    T convert(const json& v, const std::string& ptr) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) ctx_.fail(ptr, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) ctx_.fail(ptr, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) ctx_.fail(ptr, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) ctx_.fail(ptr, "expected an integer");
            return v.get<int>();
        } else {
            static_assert(std::is_unsigned_v<T>);
            if (!v.is_number_unsigned()) ctx_.fail(ptr, "expected a non-negative integer");
            return static_cast<T>(v.get<std::uint64_t>());
        }
    }

    template <class T>
    std::vector<T> array(const json& v, const std::string& ptr) const {
        if (!v.is_array()) ctx_.fail(ptr, "expected an array");
        std::vector<T> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<T>(v[i], ptr + "/" + std::to_string(i)));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) ctx_.fail(at(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string pointer_;
    const Context& ctx_;
    std::set<std::string> seen_;
};

ActivationKind parse_activation(const std::string& s, const Context& ctx, const std::string& ptr) {
    if (s == "relu") return ActivationKind::relu;
    if (s == "leaky_relu") return ActivationKind::leaky_relu;
    ctx.fail(ptr, "unknown activation '" + s + "' (expected relu or leaky_relu)");
}

NetworkConfig parse_network(const json& j, const std::string& ptr, const Context& ctx, NetworkConfig net) {
    ObjectReader r(j, ptr, ctx);
    if (const json* v = r.raw("hidden")) {
        net.hidden = r.array<std::size_t>(*v, r.at("hidden"));
        for (std::size_t i = 0; i < net.hidden.size(); ++i) {
            if (net.hidden[i] == 0) ctx.fail(r.at("hidden") + "/" + std::to_string(i), "layer width must be >= 1");
        }
    }
    if (const json* v = r.raw("activation")) {
        net.activation = parse_activation(r.convert<std::string>(*v, r.at("activation")), ctx, r.at("activation"));
    }
    r.read("leaky_slope", net.leaky_slope);
    r.read("spectral_norm", net.spectral_norm);
    r.read("batch_norm", net.batch_norm);
    r.read("dropout", net.dropout);
    if (!(net.dropout >= 0.0 && net.dropout < 1.0)) ctx.fail(r.at("dropout"), "must lie in [0, 1)");
    r.finish();
    return net;
}

GaussianComponent parse_component(const json& j, const std::string& ptr, const Context& ctx) {
    ObjectReader r(j, ptr, ctx);
    GaussianComponent c;
    c.mean = r.array<double>(r.required("mean"), r.at("mean"));
    const json& cov = r.required("cov");
    if (!cov.is_array()) ctx.fail(r.at("cov"), "expected an array of rows");
    for (std::size_t i = 0; i < cov.size(); ++i) {
        c.cov.push_back(r.array<double>(cov[i], r.at("cov") + "/" + std::to_string(i)));
    }
    c.count = r.convert<std::size_t>(r.required("count"), r.at("count"));
    const std::string label = r.convert<std::string>(r.required("label"), r.at("label"));
    if (label == "positive") {
        c.label = Label::positive;
    } else if (label == "negative") {
        c.label = Label::negative;
    } else {
        ctx.fail(r.at("label"), "expected positive or negative");
    }
    if (c.mean.empty()) ctx.fail(r.at("mean"), "must not be empty");
    if (c.cov.size() != c.mean.size()) ctx.fail(r.at("cov"), "must be a d x d matrix matching mean");
    for (std::size_t i = 0; i < c.cov.size(); ++i) {
        if (c.cov[i].size() != c.mean.size()) {
            ctx.fail(r.at("cov") + "/" + std::to_string(i), "row length must equal the mean's length");
        }
    }
    r.finish();
    return c;
}

DatasetConfig parse_dataset(const json& j, const std::string& ptr, const Context& ctx, const fs::path& base_dir) {
    ObjectReader r(j, ptr, ctx);
    DatasetConfig d;
    d.kind = r.convert<std::string>(r.required("kind"), r.at("kind"));
    d.name = d.kind;
    r.read("name", d.name);
    if (d.name.empty() || d.name.find_first_of("/\\") != std::string::npos || d.name == "." || d.name == "..") {
        ctx.fail(r.at("name"), "must be a plain directory name");
    }
    if (d.kind == "two_moons") {
        r.read("n", d.n);
        r.read("noise", d.noise);
        if (!(d.noise >= 0.0)) ctx.fail(r.at("noise"), "must be >= 0");
    } else if (d.kind == "gaussian_mixture") {
        const json& comps = r.required("components");
        if (!comps.is_array() || comps.empty()) ctx.fail(r.at("components"), "expected a non-empty array");
        for (std::size_t i = 0; i < comps.size(); ++i) {
            d.components.push_back(parse_component(comps[i], r.at("components") + "/" + std::to_string(i), ctx));
            if (d.components.back().mean.size() != d.components.front().mean.size()) {
                ctx.fail(r.at("components") + "/" + std::to_string(i), "all components must share one dimension");
            }
        }
    } else if (d.kind == "idx") {
        d.images = base_dir / r.convert<std::string>(r.required("images"), r.at("images"));
        d.labels = base_dir / r.convert<std::string>(r.required("labels"), r.at("labels"));
        r.read("downscale", d.idx.downscale);
        if (const json* v = r.raw("positive_classes")) {
            d.idx.positive_classes = r.array<int>(*v, r.at("positive_classes"));
        }
    } else {
        ctx.fail(r.at("kind"), "unknown dataset kind '" + d.kind + "' (expected two_moons, gaussian_mixture or idx)");
    }
    r.finish();
    return d;
}

void parse_train(const json& j, const std::string& ptr, const Context& ctx, TrainConfig& t) {
    ObjectReader r(j, ptr, ctx);
    r.read("epochs", t.epochs);
    r.read("batch_k", t.batch_k);
    r.read("latent_dim", t.latent_dim);
    r.read("lr", t.lr);
    r.read("adam_beta1", t.adam_beta1);
    r.read("adam_beta2", t.adam_beta2);
    r.read("reinit_period", t.reinit_period);
    r.read("eval_every", t.eval_every);
    r.read("fd_samples", t.fd_samples);
    if (t.epochs < 1) ctx.fail(r.at("epochs"), "must be >= 1");
    if (t.batch_k < 1) ctx.fail(r.at("batch_k"), "must be >= 1");
    if (t.latent_dim < 1) ctx.fail(r.at("latent_dim"), "must be >= 1");
    if (!(t.lr > 0.0)) ctx.fail(r.at("lr"), "must be > 0");
    if (!(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0)) ctx.fail(r.at("adam_beta1"), "must lie in [0, 1)");
    if (!(t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0)) ctx.fail(r.at("adam_beta2"), "must lie in [0, 1)");
    if (t.eval_every < 1) ctx.fail(r.at("eval_every"), "must be >= 1");
    if (t.fd_samples < 2) ctx.fail(r.at("fd_samples"), "must be >= 2");
    r.finish();
}

std::string canonical_form(json doc) {
    doc.erase("output_dir");
    return doc.dump();
}

MlpOptions mlp_options(const NetworkConfig& n, bool sigmoid_head) {
    MlpOptions o;
    o.hidden = n.hidden;
    o.hidden_activation = n.activation;
    o.leaky_slope = n.leaky_slope;
    o.spectral_norm = n.spectral_norm;
    o.batch_norm = n.batch_norm;
    o.dropout = n.dropout;
    o.sigmoid_head = sigmoid_head;
    return o;
}

std::ofstream open_for_write(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out = open_for_write(path);
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json summary_json(const std::optional<RollingSummary>& s) {
    if (!s) return nullptr;
    return {{"mean", s->mean}, {"std", s->std}, {"count", s->count}};
}

std::optional<double> final_accuracy(std::span<const MetricsRecord> history) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->test_accuracy) return it->test_accuracy;
    }
    return std::nullopt;
}

std::optional<json> read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_double(const std::string& cell, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw IngestError("bad numeric cell '" + cell + "' on line " + std::to_string(line_no));
    }
    return v;
}

}  // namespace

// Config ------------------------------------------------------------------------------

ExperimentConfig parse_config(std::string_view text, const std::string& source, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ConfigError(source + ":" + std::to_string(line) + ": " + e.what(), line);
    }
    const Context ctx{source, locate_keys(text)};
    ObjectReader r(doc, "", ctx);
    ExperimentConfig cfg;

    cfg.schema_version = r.convert<int>(r.required("schema_version"), r.at("schema_version"));
    if (cfg.schema_version != 1) ctx.fail(r.at("schema_version"), "unsupported schema version (expected 1)");
    r.read("seed", cfg.seed);
    if (const json* v = r.raw("output_dir")) cfg.output_dir = r.convert<std::string>(*v, r.at("output_dir"));

    const json* one = r.raw("dataset");
    const json* many = r.raw("datasets");
    if ((one != nullptr) == (many != nullptr)) ctx.fail("", "exactly one of 'dataset' or 'datasets' is required");
    if (one) {
        cfg.datasets.push_back(parse_dataset(*one, r.at("dataset"), ctx, base_dir));
    } else {
        if (!many->is_array() || many->empty()) ctx.fail(r.at("datasets"), "expected a non-empty array");
        for (std::size_t i = 0; i < many->size(); ++i) {
            const std::string ptr = r.at("datasets") + "/" + std::to_string(i);
            cfg.datasets.push_back(parse_dataset((*many)[i], ptr, ctx, base_dir));
            for (std::size_t k = 0; k + 1 < cfg.datasets.size(); ++k) {
                if (cfg.datasets[k].name == cfg.datasets.back().name) {
                    ctx.fail(ptr, "duplicate dataset name '" + cfg.datasets.back().name + "'");
                }
            }
        }
    }

    r.read("alpha", cfg.alpha);
    r.read("n_p", cfg.n_p);
    r.read("n_u", cfg.n_u);
    r.read("n_test", cfg.n_test);
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) ctx.fail(r.at("alpha"), "must lie in [0, 1]");
    if (cfg.n_p < 1) ctx.fail(r.at("n_p"), "must be >= 1");
    if (cfg.n_u < 1) ctx.fail(r.at("n_u"), "must be >= 1");
    if (cfg.n_test < 2 || cfg.n_test % 2 != 0) ctx.fail(r.at("n_test"), "must be even and >= 2");

    const json& methods = r.required("methods");
    cfg.methods = r.array<std::string>(methods, r.at("methods"));
    if (cfg.methods.empty()) ctx.fail(r.at("methods"), "at least one method is required");
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
        const std::string ptr = r.at("methods") + "/" + std::to_string(i);
        if (std::find(kMethods.begin(), kMethods.end(), cfg.methods[i]) == kMethods.end()) {
            ctx.fail(ptr, "unknown method '" + cfg.methods[i] + "' (expected observer_gan, dgan, naive_pu or oracle)");
        }
        if (std::find(cfg.methods.begin(), cfg.methods.begin() + static_cast<std::ptrdiff_t>(i), cfg.methods[i]) !=
            cfg.methods.begin() + static_cast<std::ptrdiff_t>(i)) {
            ctx.fail(ptr, "duplicate method '" + cfg.methods[i] + "'");
        }
    }

    if (const json* v = r.raw("train")) parse_train(*v, r.at("train"), ctx, cfg.train);
    if (cfg.train.batch_k > std::min(cfg.n_p, cfg.n_u)) {
        ctx.fail(r.has("train") ? r.at("train") + "/batch_k" : "", "batch_k exceeds min(n_p, n_u)");
    }

    if (const json* v = r.raw("networks")) {
        ObjectReader nr(*v, r.at("networks"), ctx);
        if (const json* g = nr.raw("generator")) cfg.generator = parse_network(*g, nr.at("generator"), ctx, cfg.generator);
        if (const json* d = nr.raw("discriminator")) {
            cfg.discriminator = parse_network(*d, nr.at("discriminator"), ctx, cfg.discriminator);
        }
        if (const json* o = nr.raw("observer")) cfg.observer = parse_network(*o, nr.at("observer"), ctx, cfg.observer);
        nr.finish();
    }

    if (const json* v = r.raw("dgan")) {
        ObjectReader dr(*v, r.at("dgan"), ctx);
        dr.read("stage2_epochs", cfg.baselines.stage2_epochs);
        dr.read("positive_weight", cfg.baselines.dgan_positive_weight);
        if (const json* c = dr.raw("checkpoints")) {
            cfg.baselines.dgan_checkpoints = dr.array<std::size_t>(*c, dr.at("checkpoints"));
            for (std::size_t i = 0; i < cfg.baselines.dgan_checkpoints.size(); ++i) {
                const std::size_t e = cfg.baselines.dgan_checkpoints[i];
                if (e < 1 || e > cfg.train.epochs) {
                    ctx.fail(dr.at("checkpoints") + "/" + std::to_string(i), "checkpoint outside [1, train.epochs]");
                }
            }
        }
        if (cfg.baselines.stage2_epochs < 1) ctx.fail(dr.at("stage2_epochs"), "must be >= 1");
        const double w = cfg.baselines.dgan_positive_weight;
        if (!(w >= 0.0 && w <= 1.0)) ctx.fail(dr.at("positive_weight"), "must lie in [0, 1]");
        dr.finish();
    }
    if (const json* v = r.raw("naive_pu")) {
        ObjectReader nr(*v, r.at("naive_pu"), ctx);
        nr.read("positive_weight", cfg.baselines.naive_positive_weight);
        if (!(cfg.baselines.naive_positive_weight > 0.0)) ctx.fail(nr.at("positive_weight"), "must be > 0");
        nr.finish();
    }
    if (const json* v = r.raw("dump")) {
        ObjectReader dr(*v, r.at("dump"), ctx);
        dr.read("samples", cfg.dump_samples);
        dr.finish();
    }
    r.finish();

    cfg.canonical = canonical_form(doc);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string() + ": cannot open config file", 0);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string(), path.parent_path());
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    json doc = json::parse(cfg.canonical);
    doc["seed"] = seed;
    cfg.canonical = doc.dump();
}

fs::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<fs::path>& cli_out) {
    if (cli_out) return *cli_out;
    if (const char* env = std::getenv("PULAB_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return cfg.output_dir;
}

// Seeds and data ----------------------------------------------------------------------

std::uint64_t pool_seed(std::uint64_t root, const std::string& dataset) {
    return derive_seed(root, "dataset/" + dataset + "/pool");
}
std::uint64_t split_seed(std::uint64_t root, const std::string& dataset) {
    return derive_seed(root, "dataset/" + dataset + "/split");
}
std::uint64_t method_seed(std::uint64_t root, const std::string& method, const std::string& dataset) {
    return derive_seed(root, "method/" + method + "/" + dataset);
}

LabeledPool build_pool(const DatasetConfig& dataset, std::uint64_t root_seed) {
    Rng rng(pool_seed(root_seed, dataset.name));
    if (dataset.kind == "two_moons") return make_two_moons(dataset.n, dataset.noise, rng);
    if (dataset.kind == "gaussian_mixture") return make_gaussian_mixture(dataset.components, rng);
    if (dataset.kind == "idx") return load_idx(dataset.images, dataset.labels, dataset.idx);
    throw SpecError("unknown dataset kind '" + dataset.kind + "'");
}

PUDataset build_dataset(const ExperimentConfig& cfg, const DatasetConfig& dataset) {
    const LabeledPool pool = build_pool(dataset, cfg.seed);
    Rng rng(split_seed(cfg.seed, dataset.name));
    try {
        return make_pu_split(pool, cfg.alpha, cfg.n_p, cfg.n_u, cfg.n_test, rng);
    } catch (const SpecError& e) {
        throw SpecError("dataset '" + dataset.name + "': " + e.what());
    }
}

TrainConfig train_config(const ExperimentConfig& cfg, std::size_t data_dim, const std::string& method,
                         const std::string& dataset) {
    TrainConfig t = cfg.train;
    t.seed = method_seed(cfg.seed, method, dataset);
    t.g_spec = make_mlp(t.latent_dim, data_dim, mlp_options(cfg.generator, false));
    t.d_spec = make_mlp(data_dim, 1, mlp_options(cfg.discriminator, true));
    t.ob_spec = make_mlp(data_dim, 1, mlp_options(cfg.observer, true));
    return t;
}

// Metrics files -----------------------------------------------------------------------

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; };
    out << r.epoch << ',' << format_double(r.loss_d) << ',' << format_double(r.loss_g) << ','
        << format_double(r.loss_ob) << ',' << opt(r.test_accuracy) << ',' << opt(r.fd_gen_unlabeled) << ','
        << opt(r.fd_gen_positive) << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw IngestError("metrics CSV: unexpected header");
    std::vector<MetricsRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != 7) throw IngestError("metrics CSV: expected 7 cells on line " + std::to_string(line_no));
        MetricsRecord r;
        r.epoch = static_cast<std::size_t>(parse_double(cells[0], line_no));
        r.loss_d = parse_double(cells[1], line_no);
        r.loss_g = parse_double(cells[2], line_no);
        r.loss_ob = parse_double(cells[3], line_no);
        auto opt = [&](const std::string& c) {
            return c.empty() ? std::optional<double>{} : std::optional<double>{parse_double(c, line_no)};
        };
        r.test_accuracy = opt(cells[4]);
        r.fd_gen_unlabeled = opt(cells[5]);
        r.fd_gen_positive = opt(cells[6]);
        out.push_back(r);
    }
    return out;
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestError(path.string() + ": missing header");
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split_commas(line)) row.push_back(parse_double(cell, line_no));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Running -----------------------------------------------------------------------------

std::optional<RollingSummary> try_summary(std::span<const MetricsRecord> history, std::size_t n) {
    const auto evaluated = std::count_if(history.begin(), history.end(),
                                         [](const MetricsRecord& r) { return r.test_accuracy.has_value(); });
    if (n == 0 || static_cast<std::size_t>(evaluated) < n) return std::nullopt;
    return rolling_summary(history, n);
}

std::vector<MethodOutcome> run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                          const RunOptions& options) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());

    std::vector<MethodOutcome> outcomes;
    for (const DatasetConfig& dataset : cfg.datasets) {
        const PUDataset data = build_dataset(cfg, dataset);
        const PUView view = data.view();
        for (const std::string& method : cfg.methods) {
            const fs::path dir = out_dir / dataset.name / method;
            fs::create_directories(dir, ec);
            if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
            const fs::path csv_path = dir / "metrics.csv";
            const fs::path summary_path = dir / "summary.json";
            const std::string fingerprint = hex64(derive_seed(0, cfg.canonical + "|" + dataset.name + "|" + method));

            MethodOutcome outcome{dataset.name, method, {}, std::nullopt, std::nullopt};
            if (options.reuse) {
                const auto old = read_json_file(summary_path);
                std::ifstream csv(csv_path);
                if (old && old->value("fingerprint", "") == fingerprint && csv) {
                    outcome.history = read_metrics_csv(csv);
                    outcome.last_50 = try_summary(outcome.history, 50);
                    outcome.last_100 = try_summary(outcome.history, 100);
                    if (options.log) *options.log << dataset.name << '/' << method << ": reusing " << csv_path.string() << '\n';
                    outcomes.push_back(std::move(outcome));
                    continue;
                }
            }
            fs::remove(summary_path, ec);

            const TrainConfig tcfg = train_config(cfg, view.dim(), method, dataset.name);
            const std::size_t total = method == "dgan" ? tcfg.epochs + cfg.baselines.stage2_epochs : tcfg.epochs;
            std::ofstream csv = open_for_write(csv_path);
            write_metrics_header(csv);
            csv.flush();
            auto sink = [&](const MetricsRecord& rec) {
                write_metrics_row(csv, rec);
                csv.flush();
                if (options.log && options.log_every > 0 && rec.epoch % options.log_every == 0) {
                    *options.log << dataset.name << '/' << method << " epoch " << rec.epoch << '/' << total;
                    if (rec.test_accuracy) *options.log << " acc " << format_double(*rec.test_accuracy);
                    *options.log << '\n';
                }
            };

            json extra = json::object();
            if (method == "observer_gan") {
                TrainResult res = train(tcfg, view, [&](const MetricsRecord& rec, const ObserverGanState&) { sink(rec); });
                outcome.history = std::move(res.history);
                extra["reinit_epochs"] = res.state.reinit_epochs;
            } else if (method == "dgan") {
                BaselineResult res = train_dgan(view, tcfg, cfg.baselines, sink);
                outcome.history = std::move(res.history);
                json checkpoints = json::object();
                for (const auto& [epoch, hist] : res.checkpoint_histories) {
                    checkpoints[std::to_string(epoch)] = {{"last_50", summary_json(try_summary(hist, 50))},
                                                          {"final_test_accuracy", final_accuracy(hist).value_or(0.0)}};
                }
                extra["stage1_epochs"] = tcfg.epochs;
                extra["checkpoints"] = checkpoints;
            } else if (method == "naive_pu") {
                outcome.history = train_naive_pu(view, tcfg, cfg.baselines, sink).history;
            } else {
                outcome.history = train_supervised_oracle(data, tcfg, sink).history;
            }
            if (!csv) throw std::runtime_error("write failed: " + csv_path.string());

            outcome.last_50 = try_summary(outcome.history, 50);
            outcome.last_100 = try_summary(outcome.history, 100);
            json summary = {{"dataset", dataset.name},
                            {"method", method},
                            {"seed", tcfg.seed},
                            {"fingerprint", fingerprint},
                            {"epochs", outcome.history.size()},
                            {"last_50", summary_json(outcome.last_50)},
                            {"last_100", summary_json(outcome.last_100)}};
            const auto fin = final_accuracy(outcome.history);
            summary["final_test_accuracy"] = fin ? json(*fin) : json(nullptr);
            summary.update(extra);
            write_text(summary_path, summary.dump(2) + "\n");
            outcomes.push_back(std::move(outcome));
        }
    }
    return outcomes;
}

std::string format_comparison(std::span<const MethodOutcome> outcomes) {
    std::vector<std::string> datasets, methods;
    for (const auto& o : outcomes) {
        if (std::find(datasets.begin(), datasets.end(), o.dataset) == datasets.end()) datasets.push_back(o.dataset);
        if (std::find(methods.begin(), methods.end(), o.method) == methods.end()) methods.push_back(o.method);
    }
    auto cell = [](const std::optional<RollingSummary>& s) {
        if (!s) return std::string("n/a");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", s->mean, s->std);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"dataset"};
    for (const auto& m : methods) {
        header.push_back(m + " @50");
        header.push_back(m + " @100");
    }
    grid.push_back(header);
    for (const auto& d : datasets) {
        std::vector<std::string> row{d};
        for (const auto& m : methods) {
            auto it = std::find_if(outcomes.begin(), outcomes.end(),
                                   [&](const MethodOutcome& o) { return o.dataset == d && o.method == m; });
            row.push_back(it == outcomes.end() ? "-" : cell(it->last_50));
            row.push_back(it == outcomes.end() ? "-" : cell(it->last_100));
        }
        grid.push_back(row);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : grid) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (const auto& row : grid) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) line += "  ";
            line += row[c] + std::string(width[c] - row[c].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

std::string comparison_json(std::span<const MethodOutcome> outcomes) {
    json rows = json::array();
    for (const auto& o : outcomes) {
        rows.push_back({{"dataset", o.dataset},
                        {"method", o.method},
                        {"last_50", summary_json(o.last_50)},
                        {"last_100", summary_json(o.last_100)}});
    }
    return json{{"rows", rows}}.dump(2) + "\n";
}

std::vector<MethodOutcome> compare_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                              const RunOptions& options) {
    if (cfg.methods.size() < 2) {
        throw ConfigError("methods: compare needs at least two methods", 0);
    }
    RunOptions opts = options;
    opts.reuse = true;
    auto outcomes = run_experiment(cfg, out_dir, opts);
    write_text(out_dir / "comparison.txt", format_comparison(outcomes));
    write_text(out_dir / "comparison.json", comparison_json(outcomes));
    return outcomes;
}

// Sample dumps --------------------------------------------------------------------------

DumpFiles dump_samples(const NetworkSpec& g_spec, ParamStore& g, std::size_t latent_dim, std::size_t n,
                       std::size_t epoch, const fs::path& dir, Rng& rng) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    const DumpFiles files{dir / ("samples_epoch" + std::to_string(epoch) + ".csv"),
                          dir / ("latent_epoch" + std::to_string(epoch) + ".csv")};
    const std::size_t d = g_spec.output_dim();

    auto header = [](char prefix, std::size_t count) {
        std::string h;
        for (std::size_t i = 0; i < count; ++i) h += (i ? "," : "") + std::string(1, prefix) + std::to_string(i);
        return h + "\n";
    };
    auto body = [](const Tensor& t) {
        std::string s;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            for (std::size_t c = 0; c < t.cols(); ++c) s += (c ? "," : "") + format_double(t.data[r * t.cols() + c]);
            s += "\n";
        }
        return s;
    };

    std::string samples = header('x', d);
    std::string latents = header('z', latent_dim);
    if (n > 0) {
        const Tensor z = sample_latent(n, latent_dim, rng);
        const Tensor x = predict(g_spec, g, z);
        samples += body(x);
        latents += body(z);
    }
    write_text(files.samples, samples);
    write_text(files.latents, latents);
    return files;
}

std::vector<DumpFiles> dump_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, std::size_t epoch,
                                       const RunOptions& options) {
    std::vector<DumpFiles> files;
    for (const DatasetConfig& dataset : cfg.datasets) {
        const PUDataset data = build_dataset(cfg, dataset);
        const PUView view = data.view();
        const TrainConfig tcfg = train_config(cfg, view.dim(), "observer_gan", dataset.name);
        validate(tcfg, view.dim());
        ObserverGanState state = init_state(tcfg);
        for (std::size_t e = 0; e < epoch; ++e) {
            const MetricsRecord rec = run_epoch(state, view, tcfg);
            if (options.log && options.log_every > 0 && rec.epoch % options.log_every == 0) {
                *options.log << dataset.name << "/observer_gan epoch " << rec.epoch << '/' << epoch << '\n';
            }
        }
        Rng rng(derive_seed(tcfg.seed, "dump/" + std::to_string(epoch)));
        files.push_back(dump_samples(tcfg.g_spec, state.g, tcfg.latent_dim, cfg.dump_samples, epoch,
                                     out_dir / dataset.name / "observer_gan", rng));
    }
    return files;
}

}  // namespace pulab
