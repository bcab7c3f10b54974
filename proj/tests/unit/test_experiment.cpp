#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <sys/wait.h>
#include <type_traits>

#include "pulab/experiment.hpp"

using namespace pulab;
namespace fs = std::filesystem;

// The training-facing API cannot reach hidden labels: PU methods take a
// PUView, which carries no label accessor, and a full PUDataset is accepted
// only by the supervised oracle.
template <class V>
concept ExposesHiddenLabels = requires(V v) { v.hidden_u_labels(); };
static_assert(!ExposesHiddenLabels<PUView>);
static_assert(ExposesHiddenLabels<PUDataset>);
static_assert(!std::is_convertible_v<const PUDataset&, PUView>);
static_assert(std::is_invocable_v<decltype(&train_supervised_oracle), const PUDataset&, const TrainConfig&,
                                  const RecordCallback&>);
static_assert(!std::is_invocable_v<decltype(&train_naive_pu), const PUDataset&, const TrainConfig&,
                                   const BaselineConfig&, const RecordCallback&>);
static_assert(!std::is_invocable_v<decltype(&train_dgan), const PUDataset&, const TrainConfig&,
                                   const BaselineConfig&, const RecordCallback&>);
static_assert(!std::is_invocable_v<decltype(&train), const TrainConfig&, const PUDataset&, const EpochCallback&>);

namespace {

const char* kTinyConfig = R"({
  "schema_version": 1,
  "seed": 11,
  "datasets": [{"name": "moons", "kind": "two_moons", "n": 600, "noise": 0.1}],
  "alpha": 0.5,
  "n_p": 64,
  "n_u": 128,
  "n_test": 64,
  "methods": ["observer_gan", "dgan", "naive_pu", "oracle"],
  "train": {"epochs": 1, "batch_k": 16, "latent_dim": 4, "lr": 0.001, "fd_samples": 32},
  "networks": {
    "generator": {"hidden": [8]},
    "discriminator": {"hidden": [8]},
    "observer": {"hidden": [8]}
  },
  "dgan": {"stage2_epochs": 1},
  "dump": {"samples": 6}
})";

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pulab_test_experiment" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

int config_error_line(const std::string& text) {
    try {
        parse_config(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text, "cfg.json");
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

int run_cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + " " + std::string(PULAB_CLI_PATH) + " -q " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

MethodOutcome outcome(const std::string& dataset, const std::string& method, std::size_t epochs, double base) {
    MethodOutcome o{dataset, method, {}, std::nullopt, std::nullopt};
    for (std::size_t e = 1; e <= epochs; ++e) {
        MetricsRecord r;
        r.epoch = e;
        r.test_accuracy = base + 0.001 * static_cast<double>(e % 7);
        o.history.push_back(r);
    }
    o.last_50 = try_summary(o.history, 50);
    o.last_100 = try_summary(o.history, 100);
    return o;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("the shipped configs parse") {
        for (const char* name : {"two_moons.json", "smoke.json"}) {
            INFO(name);
            const ExperimentConfig cfg = load_config(fs::path(PULAB_CONFIG_DIR) / name);
            CHECK_FALSE(cfg.methods.empty());
            CHECK_FALSE(cfg.datasets.empty());
        }
        const ExperimentConfig desk = load_config(fs::path(PULAB_CONFIG_DIR) / "two_moons.json");
        CHECK(desk.train.lr == 1e-3);
        CHECK(desk.train.epochs == 500);
        CHECK(desk.train.reinit_period == 100);
        CHECK(desk.seed == 1);
    }

    TEST_CASE("an unknown method names its line") {
        const std::string text = "{\n  \"schema_version\": 1,\n  \"datasets\": [{\"name\": \"m\", \"kind\": \"two_moons\"}],\n"
                                 "  \"methods\": [\"observer_gan\",\n    \"svm\"]\n}";
        CHECK(config_error_line(text) == 5);
        const std::string msg = config_error(text);
        CHECK(msg.find("cfg.json:5:") == 0);
        CHECK(msg.find("unknown method 'svm'") != std::string::npos);
    }

    TEST_CASE("an unknown key names its line and dotted path") {
        const std::string text = "{\n  \"schema_version\": 1, \"datasets\": [{\"name\": \"m\", \"kind\": \"two_moons\"}],\n"
                                 "  \"methods\": [\"oracle\"],\n  \"train\": {\n    \"epochz\": 3\n  }\n}";
        CHECK(config_error_line(text) == 5);
        CHECK(config_error(text).find("train.epochz: unknown key") != std::string::npos);
    }

    TEST_CASE("syntax errors report a line; type and range errors are rejected") {
        CHECK(config_error_line("{\n  \"seed\": 1,\n  \"alpha\": ,\n}") == 3);
        CHECK(config_error(R"({"schema_version": 1, "datasets": [{"name": "m", "kind": "two_moons"}], "methods": ["oracle"], "alpha": "x"})")
                  .find("alpha") != std::string::npos);
        CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "datasets": [{"name": "m", "kind": "two_moons"}], "methods": ["oracle"], "alpha": 2})"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "datasets": [], "methods": ["oracle"]})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "datasets": [{"name": "m", "kind": "spiral"}], "methods": ["oracle"]})"),
                        ConfigError);
    }

    TEST_CASE("seed override refreshes the canonical form") {
        ExperimentConfig cfg = parse_config(kTinyConfig);
        const std::string before = cfg.canonical;
        override_seed(cfg, 99);
        CHECK(cfg.seed == 99);
        CHECK(cfg.canonical != before);
        CHECK(method_seed(99, "oracle", "moons") == derive_seed(99, "method/oracle/moons"));
        CHECK(pool_seed(99, "moons") == derive_seed(99, "dataset/moons/pool"));
        CHECK(split_seed(99, "moons") == derive_seed(99, "dataset/moons/split"));
    }

    TEST_CASE("output directory precedence: --out, then PULAB_OUT_DIR, then the config") {
        const ExperimentConfig cfg = parse_config(kTinyConfig);
        ::unsetenv("PULAB_OUT_DIR");
        CHECK(resolve_output_dir(cfg, std::nullopt) == cfg.output_dir);
        ::setenv("PULAB_OUT_DIR", "/tmp/from-env", 1);
        CHECK(resolve_output_dir(cfg, std::nullopt) == fs::path("/tmp/from-env"));
        CHECK(resolve_output_dir(cfg, fs::path("/tmp/from-cli")) == fs::path("/tmp/from-cli"));
        ::unsetenv("PULAB_OUT_DIR");
    }
}

TEST_SUITE("metrics csv") {
    TEST_CASE("header and round trip at full precision") {
        std::vector<MetricsRecord> rows(3);
        rows[0] = {1, 0.1, 1.0 / 3.0, 2.0 / 7.0, 0.5, 1e-300, 12345.678};
        rows[1] = {2, -0.0, 1e308, 5e-324, std::nullopt, std::nullopt, std::nullopt};
        rows[2] = {3, 0.7, 0.2, 0.3, 0.123456789012345678, 2.5, std::nullopt};
        std::stringstream s;
        write_metrics_header(s);
        for (const auto& r : rows) write_metrics_row(s, r);
        const auto lines = lines_of(s.str());
        CHECK(lines[0] == "epoch,loss_d,loss_g,loss_ob,test_accuracy,fd_gen_unlabeled,fd_gen_positive");
        CHECK(lines[2] == "2,-0,1e+308,4.9406564584124654e-324,,,");
        CHECK(format_double(0.1) == "0.10000000000000001");
        std::stringstream in(s.str());
        CHECK(read_metrics_csv(in) == rows);
    }

    TEST_CASE("a wrong header is rejected") {
        std::stringstream in("epoch,loss\n1,2\n");
        CHECK_THROWS_AS(read_metrics_csv(in), IngestError);
    }
}

TEST_SUITE("run") {
    TEST_CASE("one-epoch run writes every file, one row per epoch, byte-identical on repeat") {
        const ExperimentConfig cfg = parse_config(kTinyConfig);
        const fs::path a = fresh_dir("run-a"), b = fresh_dir("run-b");
        const auto outcomes = run_experiment(cfg, a);
        run_experiment(cfg, b);
        REQUIRE(outcomes.size() == 4);
        for (const auto& o : outcomes) {
            INFO(o.method);
            const fs::path dir = a / "moons" / o.method;
            const auto rows = lines_of(slurp(dir / "metrics.csv"));
            const std::size_t expected = o.method == "dgan" ? 2 : 1;  // stage-1 epoch plus one stage-2 epoch
            CHECK(rows.size() == 1 + expected);
            CHECK(rows[0] == kMetricsHeader);
            CHECK(slurp(dir / "metrics.csv") == slurp(b / "moons" / o.method / "metrics.csv"));
            const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
            CHECK(summary["method"] == o.method);
            CHECK(summary["epochs"] == expected);
            CHECK(summary["last_50"].is_null());
            CHECK(summary["seed"] == method_seed(11, o.method, "moons"));
            std::ifstream csv(dir / "metrics.csv");
            CHECK(read_metrics_csv(csv) == o.history);
        }
    }

    TEST_CASE("a different seed changes the results") {
        ExperimentConfig cfg = parse_config(kTinyConfig);
        cfg.methods = {"oracle"};
        const auto first = run_experiment(cfg, fresh_dir("seed-a"));
        override_seed(cfg, 12);
        const auto second = run_experiment(cfg, fresh_dir("seed-b"));
        CHECK(first[0].history != second[0].history);
    }
}

TEST_SUITE("compare") {
    TEST_CASE("cells are rolling summaries; rows are datasets, columns method x window") {
        std::vector<MethodOutcome> outs{outcome("moons", "observer_gan", 120, 0.9), outcome("moons", "oracle", 120, 0.95),
                                        outcome("blobs", "observer_gan", 60, 0.8), outcome("blobs", "oracle", 60, 0.85)};
        const auto lines = lines_of(format_comparison(outs));
        REQUIRE(lines.size() == 3);
        CHECK(lines[0].find("dataset") == 0);
        CHECK(lines[0].find("observer_gan @50") != std::string::npos);
        CHECK(lines[0].find("oracle @100") != std::string::npos);
        CHECK(lines[1].find("moons") == 0);
        CHECK(lines[2].find("blobs") == 0);

        const RollingSummary s = rolling_summary(outs[0].history, 50);
        char cell[64];
        std::snprintf(cell, sizeof cell, "%.4f +/- %.4f", s.mean, s.std);
        CHECK(lines[1].find(cell) != std::string::npos);
        CHECK(lines[2].find("n/a") != std::string::npos);  // 60 epochs: no @100 window

        const auto j = nlohmann::json::parse(comparison_json(outs));
        CHECK(j["rows"].size() == 4);
        CHECK(j["rows"][0]["last_50"]["mean"].get<double>() == s.mean);
        CHECK(j["rows"][2]["last_100"].is_null());
    }

    TEST_CASE("compare reuses fingerprinted runs and needs two methods") {
        ExperimentConfig cfg = parse_config(kTinyConfig);
        cfg.methods = {"naive_pu", "oracle"};
        const fs::path dir = fresh_dir("compare");
        std::ostringstream log1, log2;
        compare_experiment(cfg, dir, {.log = &log1});
        CHECK(fs::exists(dir / "comparison.txt"));
        CHECK(fs::exists(dir / "comparison.json"));
        const std::string csv = slurp(dir / "moons" / "oracle" / "metrics.csv");
        compare_experiment(cfg, dir, {.log = &log2});
        CHECK(log1.str().find("reusing") == std::string::npos);
        CHECK(log2.str().find("reusing") != std::string::npos);
        CHECK(slurp(dir / "moons" / "oracle" / "metrics.csv") == csv);

        cfg.methods = {"oracle"};
        CHECK_THROWS_AS(compare_experiment(cfg, dir), ConfigError);
    }
}

TEST_SUITE("dump") {
    TEST_CASE("n = 0 writes headers only") {
        const ExperimentConfig cfg = parse_config(kTinyConfig);
        const TrainConfig tcfg = train_config(cfg, 2, "observer_gan", "moons");
        ObserverGanState s = init_state(tcfg);
        Rng rng(1);
        const DumpFiles f = dump_samples(tcfg.g_spec, s.g, tcfg.latent_dim, 0, 3, fresh_dir("dump0"), rng);
        CHECK(slurp(f.samples) == "x0,x1\n");
        CHECK(slurp(f.latents) == "z0,z1,z2,z3\n");
        CHECK(f.samples.filename() == "samples_epoch3.csv");
    }

    TEST_CASE("deterministic, and replaying the logged latents reproduces every row") {
        const ExperimentConfig cfg = parse_config(kTinyConfig);
        const fs::path a = fresh_dir("dump-a"), b = fresh_dir("dump-b");
        const auto fa = dump_experiment(cfg, a, 2);
        const auto fb = dump_experiment(cfg, b, 2);
        REQUIRE(fa.size() == 1);
        CHECK(slurp(fa[0].samples) == slurp(fb[0].samples));
        CHECK(slurp(fa[0].latents) == slurp(fb[0].latents));

        // Rebuild the generator independently and replay the logged z.
        const PUDataset data = build_dataset(cfg, cfg.datasets[0]);
        const TrainConfig tcfg = train_config(cfg, 2, "observer_gan", "moons");
        ObserverGanState s = init_state(tcfg);
        for (int e = 0; e < 2; ++e) run_epoch(s, data.view(), tcfg);
        const auto z = read_numeric_csv(fa[0].latents);
        const auto x = read_numeric_csv(fa[0].samples);
        REQUIRE(z.size() == 6);
        REQUIRE(x.size() == 6);
        Tensor zt = Tensor::matrix(6, 4);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c) zt.at(r, c) = z[r][c];
        const Tensor replay = predict(tcfg.g_spec, s.g, zt);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 2; ++c) CHECK(replay.at(r, c) == x[r][c]);
    }
}

TEST_SUITE("cli") {
    TEST_CASE("exit codes") {
        const fs::path dir = fresh_dir("cli");
        {
            std::ofstream bad(dir / "bad.json");
            bad << "{\n  \"schema_version\": 1,\n  \"datasets\": [{\"name\": \"m\", \"kind\": \"two_moons\"}],\n  \"methods\": [\"svm\"]\n}\n";
        }
        {
            std::ofstream good(dir / "good.json");
            good << kTinyConfig;
        }
        CHECK(run_cli("run --config " + (dir / "bad.json").string()) == 2);
        CHECK(run_cli("run --config " + (dir / "missing.json").string()) != 0);
        CHECK(run_cli("frobnicate") != 0);
        CHECK(run_cli("run --config " + (dir / "good.json").string() + " --out " + (dir / "out").string() +
                      " --seed 5") == 0);
        CHECK(fs::exists(dir / "out" / "moons" / "oracle" / "metrics.csv"));
        const auto summary = nlohmann::json::parse(slurp(dir / "out" / "moons" / "oracle" / "summary.json"));
        CHECK(summary["seed"] == method_seed(5, "oracle", "moons"));
        CHECK(run_cli("dump --config " + (dir / "good.json").string() + " --epoch 1",
                      "PULAB_OUT_DIR=" + (dir / "env").string()) == 0);
        CHECK(fs::exists(dir / "env" / "moons" / "observer_gan" / "samples_epoch1.csv"));
    }
}
