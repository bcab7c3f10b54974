// Acceptance suite: one PASS/FAIL line per criterion.
//
//   pulab_acceptance [--only N] [--out DIR]
//
// Exit status: 0 when every selected criterion passes, 77 when the only
// failures are criteria whose reference inputs are missing from this machine,
// 1 otherwise. Criteria 7-9 share training runs through DIR (fingerprinted
// reuse), so running them in separate processes costs one run per seed.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pulab/experiment.hpp"
#include "pulab/gradcheck.hpp"
#include "pulab/loss.hpp"
#include "pulab/verification.hpp"
#include "pulab/pu_split.hpp"
#include "pulab/rng.hpp"

using namespace pulab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kLossTol = 1e-12;
constexpr double kFdTol = 1e-9;
constexpr double kFdShiftTol = 1e-8;
constexpr double kFdOracleTol = 1e-8;
constexpr double kScarSe = 4.0;
constexpr double kDeterminismSeconds = 300.0;
constexpr double kObserverMin = 0.90;
constexpr double kMarginOverNaive = 0.02;
constexpr double kOracleMin = 0.97;
constexpr double kDeskSeconds = 900.0;
constexpr std::size_t kRecoveriesMin = 2;
constexpr std::uint64_t kFrozenSeed = 1;

struct Verdict {
    bool pass = false;
    std::string detail;
    bool missing_input = false;  // failed only because reference data is absent
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path config_dir() {
    if (const char* env = std::getenv("PULAB_CONFIG_DIR"); env && *env) return env;
    return PULAB_CONFIG_DIR;
}

// 1 -------------------------------------------------------------------------------

Verdict gradient_suite() {
    const auto t0 = Clock::now();
    const auto entries = run_gradient_suite();
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::string where;
    for (const auto& e : entries) {
        if (e.max_rel_error > worst) worst = e.max_rel_error, where = e.name + ":" + e.worst_param;
    }
    const bool ok = worst < kGradTol && secs < kGradSeconds && entries.size() == 6;
    return {ok, std::to_string(entries.size()) + " loss/net pairs, max rel error " + fmt("%.2e", worst) + " (" + where +
                    ") < " + fmt("%.0e", kGradTol) + ", " + fmt("%.2f", secs) + " s < 60 s"};
}

// 2 -------------------------------------------------------------------------------

Verdict loss_identities() {
    const Tensor half({16, 1}, 0.5);
    const double two_ln2 = 2.0 * std::log(2.0);
    double worst = 0.0;
    for (double v : {loss_d(half, half), loss_ob(half, half), loss_g(half, half)})
        worst = std::max(worst, std::abs(v - two_ln2));
    Rng rng(2);
    double additivity = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor a({32, 1}), b({32, 1});
        for (auto& v : a.data) v = rng.uniform(1e-6, 1.0 - 1e-6);
        for (auto& v : b.data) v = rng.uniform(1e-6, 1.0 - 1e-6);
        const Tensor ones({32, 1}, 1.0);
        additivity = std::max(additivity, std::abs(loss_g(a, b) - (bce(a, ones) + bce(b, ones))));
    }
    return {worst <= kLossTol && additivity <= kLossTol,
            "|L - 2 ln 2| = " + fmt("%.1e", worst) + ", L_G additivity " + fmt("%.1e", additivity) + " over 100 batches (tol 1e-12)"};
}

// 3 -------------------------------------------------------------------------------

bool grads_zero(const ParamStore& s) {
    for (const auto& [name, p] : s.params) {
        if (!p.value.grad) continue;
        for (double g : *p.value.grad)
            if (g != 0.0) return false;
    }
    return true;
}

Verdict freeze_correctness() {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_k = 16;
    cfg.latent_dim = 5;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    cfg.g_spec = make_mlp(5, 2, {.hidden = {12, 12}, .hidden_activation = ActivationKind::relu, .batch_norm = true,
                                 .sigmoid_head = false});
    cfg.d_spec = make_mlp(2, 1, {.hidden = {12, 12}, .spectral_norm = true});
    cfg.ob_spec = make_mlp(2, 1, {.hidden = {12, 12}, .dropout = 0.2});
    Rng pool_rng(4);
    const LabeledPool pool = make_two_moons(2000, 0.1, pool_rng);
    Rng split_rng(5);
    const PUDataset data = make_pu_split(pool, 0.5, 160, 320, 100, split_rng);

    std::size_t direct = 0, violations = 0;
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        ObserverGanState s = init_state(cfg);
        const Tensor z = sample_latent(16, 5, rng);
        std::vector<std::size_t> iu(16), ip(16);
        for (auto& i : iu) i = rng.below(data.x_u.rows());
        for (auto& i : ip) i = rng.below(data.x_p.rows());
        const Tensor x_u = gather_rows(data.x_u, iu), x_p = gather_rows(data.x_p, ip);

        Tape g_tape;
        const Var x_z = forward(cfg.g_spec, s.g, g_tape.constant(z), rng);
        const Tensor x_z_data(x_z.value().shape, x_z.value().data);
        {
            Tape t;
            t.backward(loss_d(forward(cfg.d_spec, s.d, t.constant(x_u), rng),
                              forward(cfg.d_spec, s.d, t.constant(x_z_data), rng)));
            violations += !grads_zero(s.g) + !grads_zero(s.ob);
            s.d.clear_grads();
        }
        {
            Tape t;
            t.backward(loss_ob(forward(cfg.ob_spec, s.ob, t.constant(x_p), rng),
                               forward(cfg.ob_spec, s.ob, t.constant(x_z_data), rng)));
            violations += !grads_zero(s.g) + !grads_zero(s.d);
            s.ob.clear_grads();
        }
        const ForwardOptions frozen{Mode::train, false};
        g_tape.backward(loss_g(forward(cfg.d_spec, s.d, x_z, rng, frozen), forward(cfg.ob_spec, s.ob, x_z, rng, frozen)));
        violations += !grads_zero(s.d) + !grads_zero(s.ob);
        direct += 6;
    }

    // The same contract inside the training loop: at each parameter write,
    // no other store holds a gradient.
    ObserverGanState s = init_state(cfg);
    std::size_t hooked = 0;
    s.on_update = [&](Network) {
        for (const auto* store : {&s.g, &s.d, &s.ob}) violations += !grads_zero(*store);
        hooked += 3;
    };
    train_epoch(s, data.view(), cfg);
    return {violations == 0, std::to_string(direct) + " direct and " + std::to_string(hooked) +
                                 " in-loop store checks, " + std::to_string(violations) + " non-zero"};
}

// 4 -------------------------------------------------------------------------------

double frechet_oracle(const GaussianFit& a, const GaussianFit& b) {
    const auto d = static_cast<Eigen::Index>(a.dim());
    const Eigen::Map<const Eigen::MatrixXd> sa(a.cov.data(), d, d), sb(b.cov.data(), d, d);
    const Eigen::Map<const Eigen::VectorXd> ma(a.mean.data(), d), mb(b.mean.data(), d);
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(sa * sb).eigenvalues();
    double root = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) root += std::sqrt(std::max(ev(i).real(), 0.0));
    return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * root;
}

GaussianFit random_psd(std::size_t d, Rng& rng) {
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    const Eigen::MatrixXd cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    GaussianFit f;
    for (std::size_t i = 0; i < d; ++i) f.mean.push_back(rng.normal(0.0, 2.0));
    f.cov.assign(cov.data(), cov.data() + cov.size());
    return f;
}

Verdict fd_suite() {
    Rng rng(7);
    double self = 0.0, sym = 0.0, oracle = 0.0;
    for (int i = 0; i < 20; ++i) {
        const GaussianFit a = random_psd(4, rng), b = random_psd(4, rng);
        self = std::max(self, frechet_distance(a, a));
        sym = std::max(sym, std::abs(frechet_distance(a, b) - frechet_distance(b, a)));
        oracle = std::max(oracle, std::abs(frechet_distance(a, b) - frechet_oracle(a, b)));
    }
    GaussianFit p = random_psd(2, rng), q = p;
    q.mean[0] += 3.0;
    q.mean[1] += 4.0;
    const double shift = std::abs(frechet_distance(p, q) - 25.0);
    const bool ok = self < kFdTol && sym < kFdTol && shift <= kFdShiftTol && oracle < kFdOracleTol;
    return {ok, "FD(a,a) " + fmt("%.1e", self) + ", asymmetry " + fmt("%.1e", sym) + ", |shift - 25| " +
                    fmt("%.1e", shift) + ", oracle gap " + fmt("%.1e", oracle) + " on 20 random 4-D pairs"};
}

// 5 -------------------------------------------------------------------------------

Verdict pu_split() {
    Rng pool_rng(8);
    const LabeledPool pool = make_two_moons(10000, 0.1, pool_rng);
    Rng rng(9);
    const PUDataset ds = make_pu_split(pool, 0.5, 1000, 1000, 2000, rng);
    const auto hidden_pos = static_cast<std::size_t>(
        std::count(ds.hidden_u_labels().begin(), ds.hidden_u_labels().end(), Label::positive));

    // SCAR: each of 20 positives labeled with probability 5/20 per draw.
    const std::vector<GaussianComponent> comps{{{0.0}, {{1.0}}, 20, Label::positive},
                                               {{5.0}, {{1.0}}, 20, Label::negative}};
    Rng small_rng(10);
    const LabeledPool small = make_gaussian_mixture(comps, small_rng);
    std::vector<int> hits(small.size(), 0);
    constexpr int kSeeds = 1000;
    for (int s = 0; s < kSeeds; ++s) {
        Rng r(derive_seed(11, std::to_string(s)));
        for (std::size_t src : make_pu_split(small, 0.5, 5, 10, 4, r).p_source) ++hits[src];
    }
    const double mean = kSeeds * 0.25, se = std::sqrt(kSeeds * 0.25 * 0.75);
    double worst = 0.0;
    bool negatives_clean = true;
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small.labels[i] == Label::positive) worst = std::max(worst, std::abs(hits[i] - mean) / se);
        else negatives_clean = negatives_clean && hits[i] == 0;
    }
    return {hidden_pos == 500 && worst < kScarSe && negatives_clean,
            std::to_string(hidden_pos) + " hidden positives in n_u = 1000; SCAR worst deviation " + fmt("%.2f", worst) +
                " SE over 1000 seeds (limit 4)"};
}

// 6 -------------------------------------------------------------------------------

Verdict determinism(const fs::path& out) {
    const auto t0 = Clock::now();
    // Every method and layer kind at toy width, plus the desk two-moons
    // networks over 60 epochs with three observer resets.
    ExperimentConfig desk = load_config(config_dir() / "two_moons.json");
    desk.train.epochs = 60;
    desk.train.reinit_period = 20;
    const std::vector<std::pair<std::string, ExperimentConfig>> configs{
        {"smoke", load_config(config_dir() / "smoke.json")}, {"two_moons", desk}};
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    std::size_t same = 0, total = 0;
    for (const auto& [name, cfg] : configs) {
        const fs::path a = out / "determinism" / name / "a", b = out / "determinism" / name / "b";
        fs::remove_all(out / "determinism" / name);
        const auto runs = run_experiment(cfg, a);
        run_experiment(cfg, b);
        for (const auto& o : runs) {
            const fs::path rel = fs::path(o.dataset) / o.method / "metrics.csv";
            const std::string x = slurp(a / rel);
            same += !x.empty() && x == slurp(b / rel);
            ++total;
        }
    }
    const double secs = seconds_since(t0);
    return {same == total && secs < kDeterminismSeconds,
            std::to_string(same) + "/" + std::to_string(total) +
                " metrics.csv byte-identical across repeated runs (smoke.json, two_moons.json at 60 epochs), " +
                fmt("%.1f", secs) + " s < 300 s"};
}

// 7-9 -----------------------------------------------------------------------------

struct DeskRun {
    std::map<std::string, MethodOutcome> by_method;
    double seconds = 0.0;
};

DeskRun desk_run(const fs::path& out, std::uint64_t seed, bool fresh) {
    ExperimentConfig cfg = load_config(config_dir() / "two_moons.json");
    override_seed(cfg, seed);
    const fs::path dir = out / ("seed" + std::to_string(seed));
    if (fresh) fs::remove_all(dir);
    const auto t0 = Clock::now();
    DeskRun r;
    for (auto& o : run_experiment(cfg, dir, {.log = &std::cerr, .log_every = 100, .reuse = !fresh}))
        r.by_method.emplace(o.method, std::move(o));
    r.seconds = seconds_since(t0);
    return r;
}

double last50(const DeskRun& r, const std::string& method) {
    const auto& o = r.by_method.at(method);
    return o.last_50 ? o.last_50->mean : 0.0;
}

Verdict end_to_end(const fs::path& out) {
    const DeskRun r = desk_run(out, kFrozenSeed, true);
    const double obs = last50(r, "observer_gan"), naive = last50(r, "naive_pu"), oracle = last50(r, "oracle");
    const bool ok = obs >= kObserverMin && obs - naive >= kMarginOverNaive && oracle >= kOracleMin && r.seconds < kDeskSeconds;
    return {ok, "seed 1 last-50: observer " + fmt("%.4f", obs) + " (>= 0.90), naive " + fmt("%.4f", naive) +
                    " (margin " + fmt("%+.4f", obs - naive) + " >= 0.02), oracle " + fmt("%.4f", oracle) + " (>= 0.97), " +
                    fmt("%.0f", r.seconds) + " s < 900 s"};
}

Verdict reinit_recovery(const fs::path& out) {
    const DeskRun r = desk_run(out, kFrozenSeed, false);
    const auto& history = r.by_method.at("observer_gan").history;
    auto window_mean = [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& rec : history)
            if (rec.epoch >= lo && rec.epoch <= hi && rec.test_accuracy) s += *rec.test_accuracy, ++n;
        return n ? s / static_cast<double>(n) : std::nan("");
    };
    std::size_t recovered = 0, events = 0;
    std::string detail;
    for (std::size_t reset = 100; reset + 50 <= history.size(); reset += 100) {
        const double early = window_mean(reset + 1, reset + 5), late = window_mean(reset + 30, reset + 50);
        ++events;
        recovered += late >= early;
        detail += " r=" + std::to_string(reset) + ":" + fmt("%.3f", early) + "->" + fmt("%.3f", late);
    }
    return {recovered >= kRecoveriesMin, std::to_string(recovered) + "/" + std::to_string(events) +
                                             " reinit events recover (need 2);" + detail};
}

Verdict method_ordering(const fs::path& out) {
    double obs = 0.0, naive = 0.0, oracle = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const DeskRun r = desk_run(out, seed, false);
        obs += last50(r, "observer_gan") / 5.0;
        naive += last50(r, "naive_pu") / 5.0;
        oracle += last50(r, "oracle") / 5.0;
        per_seed += " s" + std::to_string(seed) + "=" + fmt("%.3f", last50(r, "oracle")) + "/" +
                    fmt("%.3f", last50(r, "observer_gan")) + "/" + fmt("%.3f", last50(r, "naive_pu"));
    }
    return {oracle >= obs && obs >= naive, "5-seed mean last-50 oracle " + fmt("%.4f", oracle) + " >= observer " +
                                               fmt("%.4f", obs) + " >= naive " + fmt("%.4f", naive) + ";" + per_seed};
}

// 10 ------------------------------------------------------------------------------

struct MnistFiles {
    fs::path images, labels;
};

std::optional<MnistFiles> find_mnist() {
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("PULAB_MNIST_DIR"); env && *env) dirs.emplace_back(env);
    if (const char* home = std::getenv("HOME"); home && *home) {
        dirs.push_back(fs::path(home) / "data" / "mnist");
        dirs.push_back(fs::path(home) / ".cache" / "mnist");
    }
    for (const char* d : {"/data/mnist", "/usr/share/mnist", "/opt/data/mnist", "data/mnist"}) dirs.emplace_back(d);
    for (const auto& d : dirs) {
        for (const auto& [img, lab] : {std::pair{"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
                                       std::pair{"train-images.idx3-ubyte", "train-labels.idx1-ubyte"}}) {
            if (fs::is_regular_file(d / img) && fs::is_regular_file(d / lab)) return MnistFiles{d / img, d / lab};
        }
    }
    return std::nullopt;
}

/// Parses to 60000 rows of 784 and rejects a copy with a corrupted magic number.
std::pair<bool, std::string> check_idx(const MnistFiles& f, const fs::path& scratch) {
    const LabeledPool pool = load_idx(f.images, f.labels);
    const fs::path bad = scratch / "corrupted-images.idx";
    fs::copy_file(f.images, bad, fs::copy_options::overwrite_existing);
    {
        std::fstream io(bad, std::ios::in | std::ios::out | std::ios::binary);
        io.seekp(2);
        io.put(static_cast<char>(0x0B));
    }
    std::string error;
    try {
        read_idx_images(bad);
    } catch (const IngestError& e) {
        error = e.what();
    }
    fs::remove(bad);
    const bool ok = pool.size() == 60000 && pool.dim() == 784 && error.find("offset 0") != std::string::npos;
    return {ok, std::to_string(pool.size()) + " rows x " + std::to_string(pool.dim()) + ", corrupted magic -> \"" +
                    error.substr(error.find("bad magic")) + "\""};
}

Verdict idx_ingestion(const fs::path& out) {
    const fs::path scratch = out / "idx";
    fs::create_directories(scratch);
    if (const auto real = find_mnist()) {
        const auto [ok, detail] = check_idx(*real, scratch);
        return {ok, "reference MNIST " + real->images.string() + ": " + detail};
    }
    // No reference files: exercise the same path on a synthetic file with the
    // MNIST training-set header, but do not count it as the criterion.
    IdxImages img{60000, 28, 28, std::vector<std::uint8_t>(60000 * 784)};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 131) >> 3);
    std::vector<std::uint8_t> labels(60000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
    const MnistFiles synth{scratch / "synthetic-images-idx3-ubyte", scratch / "synthetic-labels-idx1-ubyte"};
    write_idx_images(synth.images, img);
    write_idx_labels(synth.labels, labels);
    std::vector<char> header(16);
    std::ifstream(synth.images, std::ios::binary).read(header.data(), 16);
    const std::vector<unsigned char> expected{0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0xEA, 0x60,
                                              0x00, 0x00, 0x00, 0x1C, 0x00, 0x00, 0x00, 0x1C};
    const bool header_ok = std::equal(expected.begin(), expected.end(), header.begin(),
                                      [](unsigned char e, char h) { return e == static_cast<unsigned char>(h); });
    const auto [ok, detail] = check_idx(synth, scratch);
    fs::remove(synth.images);
    fs::remove(synth.labels);
    return {false,
            "reference MNIST files not found (set PULAB_MNIST_DIR to a directory holding train-images-idx3-ubyte and "
            "train-labels-idx1-ubyte); synthetic file with the MNIST header " +
                std::string(header_ok && ok ? "passes" : "FAILS") + ": " + detail,
            header_ok && ok};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    fs::path out = fs::temp_directory_path() / "pulab_acceptance";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (a == "--out" && i + 1 < argc) out = argv[++i];
        else {
            std::cerr << "usage: pulab_acceptance [--only N] [--out DIR]\n";
            return 2;
        }
    }
    fs::create_directories(out);

    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient suite", gradient_suite},
        {"loss identities", loss_identities},
        {"freeze correctness", freeze_correctness},
        {"frechet distance suite", fd_suite},
        {"pu split exactness", pu_split},
        {"determinism", [&] { return determinism(out); }},
        {"desk-scale two-moons", [&] { return end_to_end(out); }},
        {"reinit recovery", [&] { return reinit_recovery(out); }},
        {"method ordering over 5 seeds", [&] { return method_ordering(out); }},
        {"idx ingestion", [&] { return idx_ingestion(out); }},
    };

    bool hard_failure = false, missing_input = false;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %2zu %-30s %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
        if (!v.pass) (v.missing_input ? missing_input : hard_failure) = true;
    }
    if (hard_failure) return 1;
    return missing_input ? 77 : 0;
}
