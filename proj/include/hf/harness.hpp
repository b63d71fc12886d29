#pragma once

// Experiment configuration, the training loop, evaluation and sweep drivers,
// the closed-form oracle gate, and the end-to-end demo pipeline. Everything
// here is deterministic under a fixed seed except wall-clock measurements,
// which are confined to the documented timing fields.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hf/flowcore.hpp"
#include "hf/metrics.hpp"
#include "hf/net.hpp"
#include "hf/samplers.hpp"
#include "hf/tasks.hpp"

namespace hf::harness {

struct ExperimentConfig {
    tasks::TaskSpec task = tasks::TaskSpec::cond_gmm2d();
    net::NetworkArch arch;
    flowcore::TimeSamplingConfig time_sampling;
    net::AdamConfig adam;
    std::string lr_schedule = "cosine";  // cosine | constant
    std::uint64_t train_steps = 20000;
    std::size_t batch_size = 256;
    std::uint64_t eval_every = 500;
    std::size_t val_size = 2048;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    /// Desk-scale default recipe on the multimodal task.
    static ExperimentConfig default_gmm();
    /// Gaussian-oracle task recipe (logit-normal time sampling; see README).
    static ExperimentConfig default_gauss();

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    bool operator==(const ExperimentConfig& other) const;
};

/// FNV-1a of the canonical config rendering; stamped into CSV headers.
std::uint64_t config_hash(const ExperimentConfig& config);
std::string provenance_comment(const ExperimentConfig& config);

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path log_path;
    net::NetworkParams params;
    double final_val_reflow = 0.0;
    double final_val_meanflow = 0.0;
    /// Median of the last logged validation values per mode (plateau probe).
    double plateau_val_reflow = 0.0;
    double plateau_val_meanflow = 0.0;
};

/// Trains per config, writing train_log.csv and checkpoint.json into
/// config.out_dir. Aborts with NumericError (after dumping the offending
/// batch) if the loss leaves the finite range.
TrainResult train(const ExperimentConfig& config);

/// Per-sampler energy distance, RBF MMD, NFE and median per-sample wall time
/// against a fresh reference sample of the task. Rows are deterministic under
/// (seed, spec); the wall_ms_per_sample rows are measurements.
metrics::MetricReport evaluate(const net::NetworkParams& params, const tasks::TaskSpec& task,
                               const std::vector<samplers::SamplerSpec>& specs, std::size_t n,
                               std::uint64_t seed, bool with_timing = true);

struct SweepPoint {
    double x = 0.0;  // alpha or NFE
    samplers::SamplerSpec spec;
    double energy_distance = 0.0;
    double mmd = 0.0;
    std::uint64_t nfe = 0;
};

struct AlphaSweepResult {
    std::vector<SweepPoint> points;
    int argmin = -1;  // -1 on degenerate single-value grids
};

inline const std::vector<double> kDefaultAlphaGrid = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40};

/// HybridFlow quality over an alpha grid (t_refine = alpha); emits CSV + SVG
/// when out_dir is set.
AlphaSweepResult sweep_alpha(const net::NetworkParams& params, const tasks::TaskSpec& task,
                             const std::vector<double>& grid, std::size_t n, std::uint64_t seed,
                             const std::optional<std::filesystem::path>& out_dir,
                             const ExperimentConfig& provenance, bool displacement_scaling = true,
                             bool fresh_noise = false);

struct NfeSweepResult {
    std::vector<SweepPoint> points;
};

/// Step-count-versus-quality table over all sampler families; emits CSV + SVG
/// when out_dir is set.
NfeSweepResult sweep_nfe(const net::NetworkParams& params, const tasks::TaskSpec& task,
                         std::size_t n, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& out_dir,
                         const ExperimentConfig& provenance, bool displacement_scaling = true,
                         bool fresh_noise = false);

/// Median wall-clock per generated sample over `reps` single-sample calls.
double bench_sampler_ms(const net::NetworkParams& params, const tasks::TaskSpec& task,
                        const samplers::SamplerSpec& spec, std::size_t reps = 1000);

struct OracleCheckOptions {
    /// Test-only canary: multiplies the closed-form transport coefficient by
    /// (1 + perturbation) inside the fine-grid comparison. Nonzero values must
    /// make that check fail.
    double coefficient_perturbation = 0.0;
    std::uint64_t seed = 2024;
};

/// Runs every closed-form-versus-independent-oracle validation and prints one
/// line per check (value, tolerance, verdict). Returns true iff all pass.
bool oracle_check(std::ostream& out, const OracleCheckOptions& options = {});

struct DemoOptions {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out/demo";
    bool displacement_scaling = true;   // --literal-eq12 clears this
    bool fresh_noise_renoise = false;   // --fresh-renoise sets this
};

/// Full default pipeline: oracle gate, training, evaluation, both sweeps, and
/// a staged trace dump. Throws Error subtypes on failure.
void demo(const DemoOptions& options);

/// The sampler set reported by evaluate/demo.
std::vector<samplers::SamplerSpec> default_sampler_set(bool displacement_scaling = true,
                                                       bool fresh_noise = false);

}  // namespace hf::harness
