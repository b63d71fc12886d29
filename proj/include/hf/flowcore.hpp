#pragma once

// Straight-line path construction, time-pair sampling, and the unified
// training objective. One network serves two regimes: degenerate pairs
// (r = t) regress the instantaneous velocity directly, non-degenerate pairs
// regress the bootstrapped average-velocity target
//     u_tgt = v - (t - r) * du/dt,
// where du/dt is the network JVP along the path tangent (v, 0, 1) and u_tgt
// is held constant when differentiating the loss.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "hf/net.hpp"
#include "hf/numkit.hpp"

namespace hf::flowcore {

struct TimePair {
    double r = 0.0;
    double t = 0.0;

    TimePair() = default;
    TimePair(double r_, double t_);

    bool degenerate() const { return r == t; }
};

struct TimeSamplingConfig {
    enum class Dist { uniform, logit_normal };

    double p_degenerate = 0.5;
    Dist dist = Dist::uniform;
    double logit_mu = 0.0;
    double logit_sigma = 1.0;

    void validate() const;
};

std::string time_dist_name(TimeSamplingConfig::Dist d);
TimeSamplingConfig::Dist time_dist_from_name(const std::string& name);

/// One training tuple on the straight-line path; all rows are 1 x dim.
struct PathSample {
    RealArray x0, z1, c;
    TimePair times;
    RealArray z_t;     // (1-t) x0 + t z1, exact
    RealArray v_star;  // z1 - x0, exact
};

/// Struct-of-arrays batch with the same invariants per row.
struct PathBatch {
    RealArray x0, z1, c;
    RealArray r, t;  // n x 1
    RealArray z_t, v_star;

    std::size_t size() const { return x0.rows(); }
    PathSample sample(std::size_t i) const;
};

/// z_t = (1-t) x0 + t z1 with a per-row t column. Throws DomainError for
/// t outside [0,1].
RealArray interpolate(const RealArray& x0, const RealArray& z1, const RealArray& t);
RealArray interpolate(const RealArray& x0, const RealArray& z1, double t);

/// Degenerate pair with probability p_degenerate, otherwise two independent
/// draws from the t-distribution, sorted (ties resampled).
TimePair sample_time_pair(RngState& rng, const TimeSamplingConfig& cfg);

PathSample make_path_sample(const RealArray& x0, const RealArray& z1, const RealArray& c,
                            TimePair times);

/// Assembles a batch: z_t and v_star are derived exactly from (x0, z1, t).
PathBatch assemble_path_batch(const RealArray& x0, const RealArray& z1, const RealArray& c,
                              const RealArray& r, const RealArray& t);

/// u_tgt = v - (t - r) * du_dt, batched with per-row (t - r).
RealArray meanflow_target(const RealArray& v, const RealArray& r, const RealArray& t,
                          const RealArray& du_dt);

/// Loss of the unified objective on a batch, no parameter update. The target
/// is treated as a constant.
double unified_loss(const net::NetworkParams& params, const PathBatch& batch);

/// One optimization step: evaluates the loss, backpropagates with the target
/// frozen, applies Adam (scaled by lr_scale), and returns the pre-step loss.
double unified_loss_step(net::NetworkParams& params, const PathBatch& batch,
                         net::AdamState& opt, double lr_scale = 1.0);

// -- training log ---------------------------------------------------------------

/// Append-only CSV: step, wall_ms, train_loss, val_loss_reflow_mode,
/// val_loss_meanflow_mode, seed. The wall_ms column is a wall-clock
/// measurement and is the one field excluded from bit-exactness guarantees.
class TrainLogWriter {
  public:
    TrainLogWriter(const std::filesystem::path& path, const std::string& header_comment);

    void append(std::uint64_t step, double wall_ms, double train_loss, double val_reflow,
                double val_meanflow, std::uint64_t seed);

  private:
    std::ofstream out_;
};

}  // namespace hf::flowcore
