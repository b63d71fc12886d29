#pragma once

// Two-sample quality metrics, validation losses in both network modes, and
// the diagnostic audits (Lipschitz probe, distribution-shift proxy,
// error-accumulation table). All functions are pure and deterministic given
// their inputs; pairwise statistics use exact fixed-order sums.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hf/flowcore.hpp"
#include "hf/net.hpp"
#include "hf/numkit.hpp"
#include "hf/samplers.hpp"
#include "hf/tasks.hpp"

namespace hf::metrics {

/// 2 E||a-b|| - E||a-a'|| - E||b-b'|| over all ordered pairs (V-statistic,
/// diagonal included), so identical samples give exactly zero.
double energy_distance(const RealArray& a, const RealArray& b);

/// Biased V-statistic MMD^2 with Gaussian kernel exp(-||x-y||^2 / (2 h^2)).
double mmd_rbf(const RealArray& a, const RealArray& b, double bandwidth);

/// Median pairwise distance of the pooled sample (deterministic stride
/// subsample above `cap` points).
double median_heuristic_bandwidth(const RealArray& a, const RealArray& b, std::size_t cap = 2048);

enum class ValMode { reflow, meanflow };

std::string val_mode_name(ValMode mode);

/// Mean squared residual against the mode's target; no update. The batch must
/// be mode-appropriate: all pairs degenerate for reflow, all strict for
/// meanflow (throws DomainError otherwise).
double validation_loss(const net::NetworkParams& params, const flowcore::PathBatch& batch,
                       ValMode mode);

/// Max over probe points and random unit directions of the finite-difference
/// directional stretch of u(., t, t, c).
double lipschitz_estimate(const net::NetworkParams& params, const RealArray& probes, double t,
                          const RealArray& c, RngState& rng, double eps = 1e-3,
                          std::size_t directions = 64);

// -- distribution-shift proxy (diagonal-Gaussian moment KL) ---------------------

struct ShiftEstimate {
    int step = 0;
    double time = 0.0;   // path time t_k of the recorded state
    std::string label;
    double kl = 0.0;     // KL(moment fit || oracle marginal), nats
};

/// KL(N(mean_p, diag(var_p)) || N(mean_q, var_q I)) in nats.
double gaussian_moment_kl(const RealArray& mean_p, const RealArray& var_p,
                          const RealArray& mean_q, double var_q);

/// Runs the sampler from n noise draws at a fixed condition and fits
/// diagonal-Gaussian moments to every recorded state, including the noise
/// input at t=1, against the oracle marginal at that state's time.
std::vector<ShiftEstimate> shift_audit(const samplers::VelocityField& field,
                                       const samplers::SamplerSpec& spec,
                                       const tasks::GaussianOracle& oracle,
                                       const RealArray& c_row, std::size_t n, RngState& rng);

// -- error-accumulation audit ----------------------------------------------------

struct ErrorAuditRow {
    int step = 0;
    double t_hi = 0.0, t_lo = 0.0;
    double mean_step_error = 0.0;      // mean ||e_k|| at the visited states
    double mean_deviation = 0.0;       // mean ||z(k+1) - z*(k+1)||
    double lipschitz = 0.0;            // exact oracle Lipschitz constant over [t_lo, t_hi]
    double bound_fraction = 0.0;       // trajectories with dev_{k+1} <= (1+L h) dev_k + h||e_k||
};

struct ErrorAudit {
    std::vector<ErrorAuditRow> rows;
    /// Fraction of trajectories satisfying the recursion bound at every step.
    double trajectories_within_bound = 0.0;
};

/// Runs multi-step interval sampling alongside the exact oracle transport from
/// identical noise. e_k is measured against the oracle average velocity at the
/// visited (possibly off-track) state; the per-step inequality uses the
/// oracle's exact Lipschitz constant and the step size actually applied.
ErrorAudit error_accumulation_audit(const samplers::VelocityField& field,
                                    const tasks::GaussianOracle& oracle, const RealArray& c_row,
                                    int steps, std::size_t n, RngState& rng,
                                    bool displacement_scaling = true);

// -- reports ----------------------------------------------------------------------

struct MetricEntry {
    std::string metric;
    double value = 0.0;
    std::string task;
    std::string sampler;
    int steps = 0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::size_t n = 0;
};

struct MetricReport {
    std::vector<MetricEntry> entries;

    void add(MetricEntry entry);
    const MetricEntry* find(const std::string& metric, const std::string& sampler) const;
    /// Flat CSV (metric,value,task,sampler,K,alpha,seed,n) with the versioned
    /// schema and provenance in '#' header comments.
    void write_csv(const std::filesystem::path& path, const std::string& header_comment) const;
};

}  // namespace hf::metrics
