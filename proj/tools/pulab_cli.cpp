// pulab: seeded PU-learning experiment runner.
//
//   pulab run --config exp.json [--out DIR] [--seed N]
//   pulab compare --config exp.json
//   pulab gradcheck
//   pulab dump --config exp.json --epoch N
//
// Exit codes: 0 success, 1 I/O or other failure, 2 config or validation error,
// 3 training aborted on a numeric fault (rows written so far are kept).

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "pulab/experiment.hpp"
#include "pulab/verification.hpp"

namespace {

constexpr double kGradTolerance = 1e-4;

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const pulab::NumericError& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return 3;
    } catch (const pulab::SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Positive-unlabeled learning lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t epoch = 0;
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    auto* run = app.add_subcommand("run", "Train every configured method and write metrics");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (overrides PULAB_OUT_DIR and the config)");
    run->add_option("--seed", seed, "Root seed (overrides the config)");

    auto* compare = app.add_subcommand("compare", "Run or reuse all methods and write a comparison table");
    compare->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer kind and loss");

    auto* dump = app.add_subcommand("dump", "Train the observer GAN to an epoch and dump generated samples");
    dump->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    dump->add_option("--epoch", epoch, "Epoch to dump after")->required();

    CLI11_PARSE(app, argc, argv);

    pulab::RunOptions options;
    if (!quiet) options.log = &std::cerr;

    if (*gradcheck) {
        return guarded([] {
            bool ok = true;
            for (const auto& e : pulab::run_gradient_suite()) {
                const bool pass = e.max_rel_error < kGradTolerance;
                ok = ok && pass;
                std::printf("%-4s %-24s max_rel_error=%.3e worst=%s checked=%zu\n", pass ? "ok" : "FAIL",
                            e.name.c_str(), e.max_rel_error, e.worst_param.c_str(), e.checked);
            }
            return ok ? 0 : 1;
        });
    }

    return guarded([&] {
        pulab::ExperimentConfig cfg = pulab::load_config(config_path);
        if (seed) pulab::override_seed(cfg, *seed);
        const auto out = pulab::resolve_output_dir(cfg, out_dir ? std::optional<std::filesystem::path>(*out_dir)
                                                                : std::nullopt);
        if (*run) {
            pulab::run_experiment(cfg, out, options);
            std::cout << "wrote " << out.string() << '\n';
        } else if (*compare) {
            const auto outcomes = pulab::compare_experiment(cfg, out, options);
            std::cout << pulab::format_comparison(outcomes);
        } else {
            for (const auto& f : pulab::dump_experiment(cfg, out, epoch, options)) {
                std::cout << f.samples.string() << '\n' << f.latents.string() << '\n';
            }
        }
        return 0;
    });
}
