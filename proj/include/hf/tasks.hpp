#pragma once

// Synthetic conditional data distributions used as desk-scale stand-ins for
// action generation, plus a closed-form oracle for the isotropic-Gaussian
// family. For a fixed condition, both cond_gauss and cond_gmm2d are isotropic
// Gaussians, so the oracle covers either.

#include <cstdint>
#include <filesystem>
#include <string>

#include "hf/numkit.hpp"

namespace hf::tasks {

enum class TaskKind { cond_gauss, cond_gmm2d, action_chunk_spline };

std::string task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

struct TaskSpec {
    TaskKind kind = TaskKind::cond_gmm2d;
    std::size_t dim = 2;
    std::size_t cond_dim = 4;

    // cond_gauss: x0 | c ~ N(mean_base + cond_coupling * lift(c), sigma^2 I),
    // c ~ U[-1,1]^cond_dim, lift cycles c through the sample coordinates.
    RealArray gauss_mean_base;
    double gauss_sigma = 2e-4;
    double cond_coupling = 0.5;

    // cond_gmm2d: components on a circle, condition one-hot selects one.
    std::size_t gmm_components = 4;
    double gmm_radius = 2.0;
    double gmm_sigma = 0.15;

    // action_chunk_spline: natural cubic through `knots` random 2-D points,
    // sampled at `horizon` positions; condition is [start, goal].
    std::size_t horizon = 16;
    std::size_t dof = 2;
    std::size_t knots = 4;

    static TaskSpec cond_gauss(std::size_t dim = 2, std::size_t cond_dim = 2,
                               double sigma = 2e-4, double coupling = 0.5);
    static TaskSpec cond_gmm2d();
    static TaskSpec action_chunk_spline();
    static TaskSpec by_name(const std::string& name);

    std::string name() const { return task_name(kind); }
    void validate() const;
};

/// Sampled second differences of spline trajectories stay below this bound
/// (knot values in [-1,1], 4 knots, 16 samples; see draw()).
inline constexpr double kSplineSecondDiffCap = 0.5;

struct ConditionedBatch {
    RealArray x0;  // n x dim
    RealArray c;   // n x cond_dim
};

/// i.i.d. (x0, c) pairs; per-sample draw order is condition first, then data,
/// so the stream is reproducible from (spec, rng).
ConditionedBatch draw(const TaskSpec& spec, RngState& rng, std::size_t n);

/// Conditions only, from the task's documented condition distribution.
RealArray draw_conditions(const TaskSpec& spec, RngState& rng, std::size_t n);

/// x0 ~ p(.|c) for caller-supplied conditions (one x0 row per c row).
RealArray draw_given(const TaskSpec& spec, const RealArray& c, RngState& rng);

// -- Gaussian oracle -----------------------------------------------------------
//
// For x0 ~ N(mu, sigma^2 I) and z1 ~ N(0, I) coupled independently along the
// straight-line path z_t = (1-t) x0 + t z1:
//   marginal   q_t = N((1-t) mu, s_t^2 I),  s_t^2 = (1-t)^2 sigma^2 + t^2
//   velocity   v*(z,t) = a(t) (z - (1-t) mu) - mu,
//              a(t) = (t - (1-t) sigma^2) / s_t^2
//   transport  z(r) = (1-r) mu + (s_r / s_t) (z - (1-t) mu)
// The transport form follows from a(t) = d/dt log s_t, so deviations from the
// mean path scale with the marginal standard deviation.

struct GaussianOracle {
    RealArray mu;    // 1 x dim conditional mean
    double sigma = 1.0;

    double marginal_std(double t) const;
};

/// Conditional oracle for cond_gauss or cond_gmm2d at a fixed condition row.
GaussianOracle make_gaussian_oracle(const TaskSpec& spec, const RealArray& c_row);
bool has_gaussian_oracle(const TaskSpec& spec);

/// Mean of mu(c) under the task's condition distribution (for cond_gauss the
/// conditions are zero-mean, so this is the base mean).
RealArray oracle_mu(const TaskSpec& spec, const RealArray& c_row);

/// Exact conditional expectation E[z1 - x0 | z_t = z]. t in [0,1].
RealArray oracle_instantaneous_velocity(const GaussianOracle& oracle, const RealArray& z, double t);

/// Exact average velocity over [r, t] (r = t falls back to instantaneous).
RealArray oracle_average_velocity(const GaussianOracle& oracle, const RealArray& z_t, double r,
                                  double t);

/// Closed-form state transition of the oracle field from time `from_t` to
/// `to_t` (either direction).
RealArray oracle_transport(const GaussianOracle& oracle, const RealArray& z, double from_t,
                           double to_t);

/// (mean, per-coordinate variance) of the interpolation marginal q_t.
std::pair<RealArray, double> oracle_marginal(const GaussianOracle& oracle, double t);

/// Lipschitz constant (in z) of the oracle average velocity over [r, t];
/// exact because the field is affine.
double oracle_avg_velocity_lipschitz(const GaussianOracle& oracle, double r, double t);

// -- dataset files ---------------------------------------------------------------

/// CSV with header (c_0..c_{k-1}, x_0..x_{d-1}); header_comment lines are
/// prefixed with '#'.
void dump_dataset(const std::filesystem::path& path, const ConditionedBatch& batch,
                  const std::string& header_comment);
ConditionedBatch load_dataset(const std::filesystem::path& path, std::size_t cond_dim);

}  // namespace hf::tasks
