#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pulab/baselines.hpp"
#include "pulab/datasets.hpp"
#include "pulab/errors.hpp"
#include "pulab/observer_gan.hpp"

namespace pulab {

/// Config validation failure. what() reads "<source>:<line>: <message>" when
/// the offending key could be located.
class ConfigError : public SpecError {
public:
    ConfigError(const std::string& message, int line) : SpecError(message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

struct DatasetConfig {
    std::string name;
    std::string kind;  // two_moons | gaussian_mixture | idx
    // two_moons
    std::size_t n = 20000;
    double noise = 0.1;
    // gaussian_mixture
    std::vector<GaussianComponent> components;
    // idx, resolved against the config file's directory
    std::filesystem::path images;
    std::filesystem::path labels;
    IdxOptions idx;
};

struct NetworkConfig {
    std::vector<std::size_t> hidden{64, 64};
    ActivationKind activation = ActivationKind::leaky_relu;
    double leaky_slope = 0.2;
    bool spectral_norm = false;
    bool batch_norm = false;
    double dropout = 0.0;
};

inline const std::vector<std::string> kMethods{"observer_gan", "dgan", "naive_pu", "oracle"};

struct ExperimentConfig {
    int schema_version = 1;
    std::vector<DatasetConfig> datasets;
    double alpha = 0.5;
    std::size_t n_p = 1000;
    std::size_t n_u = 2000;
    std::size_t n_test = 2000;
    std::vector<std::string> methods;
    /// Training hyperparameters; the network specs are filled per dataset.
    TrainConfig train;
    NetworkConfig generator{.hidden = {64, 64},
                            .activation = ActivationKind::relu,
                            .leaky_slope = 0.2,
                            .spectral_norm = false,
                            .batch_norm = true,
                            .dropout = 0.0};
    NetworkConfig discriminator;
    NetworkConfig observer;
    BaselineConfig baselines;
    std::size_t dump_samples = 256;
    std::filesystem::path output_dir = "pulab_out";
    std::uint64_t seed = 0;

    /// Key-sorted dump of the parsed document without output_dir; identifies
    /// results that can be reused.
    std::string canonical;
};

/// Parses and validates a JSON config. `source` labels error messages; relative
/// IDX paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "config",
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces the seed and refreshes the canonical form.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

/// --out, then $PULAB_OUT_DIR, then the config's output_dir.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const std::optional<std::filesystem::path>& cli_out);

// Seeds -----------------------------------------------------------------------
//
// Every stream is derive_seed(root, label): FNV-1a of the label mixed into the
// root by splitmix64. Labels:
//   dataset/<name>/pool     source pool draw
//   dataset/<name>/split    PU split, shared by all methods
//   method/<m>/<name>       run seed of method m on that dataset
//   dump/<epoch>            latent draw for a sample dump (under the run seed)

std::uint64_t pool_seed(std::uint64_t root, const std::string& dataset);
std::uint64_t split_seed(std::uint64_t root, const std::string& dataset);
std::uint64_t method_seed(std::uint64_t root, const std::string& method, const std::string& dataset);

LabeledPool build_pool(const DatasetConfig& dataset, std::uint64_t root_seed);
PUDataset build_dataset(const ExperimentConfig& cfg, const DatasetConfig& dataset);

/// The TrainConfig for one method on data of width `data_dim`.
TrainConfig train_config(const ExperimentConfig& cfg, std::size_t data_dim, const std::string& method,
                         const std::string& dataset);

// Metrics files -----------------------------------------------------------------

inline constexpr std::string_view kMetricsHeader =
    "epoch,loss_d,loss_g,loss_ob,test_accuracy,fd_gen_unlabeled,fd_gen_positive";

/// %.17g, which round-trips every finite double.
std::string format_double(double v);

void write_metrics_header(std::ostream& out);
/// Missing evaluation fields are written as empty cells.
void write_metrics_row(std::ostream& out, const MetricsRecord& record);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

// Running -----------------------------------------------------------------------

struct MethodOutcome {
    std::string dataset;
    std::string method;
    std::vector<MetricsRecord> history;
    std::optional<RollingSummary> last_50;
    std::optional<RollingSummary> last_100;
};

struct RunOptions {
    std::ostream* log = nullptr;
    std::size_t log_every = 50;
    /// Reuse metrics whose summary carries the same fingerprint instead of retraining.
    bool reuse = false;
};

/// Trains every configured method on every dataset, writing
/// <out>/<dataset>/<method>/metrics.csv (row by row) and summary.json.
std::vector<MethodOutcome> run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                          const RunOptions& options = {});

/// Mean and std over the last `n` evaluated epochs, or nothing when fewer exist.
std::optional<RollingSummary> try_summary(std::span<const MetricsRecord> history, std::size_t n);

/// Rows are datasets; columns are method x {last 50, last 100}.
std::string format_comparison(std::span<const MethodOutcome> outcomes);
std::string comparison_json(std::span<const MethodOutcome> outcomes);

/// Runs (or reuses) every method, then writes comparison.txt and comparison.json.
/// Requires at least two methods.
std::vector<MethodOutcome> compare_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                              const RunOptions& options = {});

// Sample dumps ------------------------------------------------------------------

struct DumpFiles {
    std::filesystem::path samples;
    std::filesystem::path latents;
};

/// Writes n generated rows (x0..x{d-1}) and the z rows that produced them
/// (z0..z{l-1}) to samples_epoch<epoch>.csv and latent_epoch<epoch>.csv in
/// `dir`. The generator runs in eval mode, so each sample row equals
/// predict(g_spec, g, z-row).
DumpFiles dump_samples(const NetworkSpec& g_spec, ParamStore& g, std::size_t latent_dim, std::size_t n,
                       std::size_t epoch, const std::filesystem::path& dir, Rng& rng);

/// Trains the observer GAN for `epoch` epochs on each dataset and dumps
/// cfg.dump_samples generated rows into <out>/<dataset>/observer_gan/.
std::vector<DumpFiles> dump_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::size_t epoch, const RunOptions& options = {});

/// Numeric CSV with one header line.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path);

}  // namespace pulab
