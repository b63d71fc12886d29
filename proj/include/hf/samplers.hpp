#pragma once

// Inference procedures over an average-velocity field u(z, r, t, c):
//   meanflow_1step      x = z1 - u(z1, 0, 1)
//   euler_reflow        K Euler steps of the instantaneous field (r = t)
//   meanflow_multistep  K interval jumps on a descending uniform grid
//   hybridflow          global jump -> renoise -> single local refine (2 NFE)
//
// Samplers are written against a VelocityField callable so that both trained
// networks and closed-form oracle fields run through identical code. Every
// trace reports the number of field evaluations actually performed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hf/net.hpp"
#include "hf/numkit.hpp"

namespace hf::samplers {

enum class SamplerMode { euler_reflow, meanflow_1step, meanflow_multistep, hybridflow };

std::string sampler_mode_name(SamplerMode mode);
SamplerMode sampler_mode_from_name(const std::string& name);

struct SamplerSpec {
    SamplerMode mode = SamplerMode::hybridflow;
    int steps = 1;                      // euler_reflow / meanflow_multistep
    double alpha = 0.15;                // hybridflow renoise ratio
    double t_refine = 0.15;             // hybridflow refine time (= alpha unless overridden)
    bool displacement_scaling = true;   // scale interval jumps by (t - r)
    bool fresh_noise_renoise = false;   // renoise with a fresh draw instead of the jump noise

    static SamplerSpec meanflow_1step();
    static SamplerSpec euler_reflow(int steps);
    static SamplerSpec meanflow_multistep(int steps);
    /// Hybrid spec with the time coupling alpha = t_refine.
    static SamplerSpec hybridflow(double alpha = 0.15);

    void validate() const;
    /// Network evaluations this spec will perform.
    std::uint64_t analytic_nfe() const;
    /// e.g. "euler_reflow@16", "hybridflow@0.15".
    std::string label() const;
};

/// Batched field evaluation at shared scalar times: u(z, r, t, c) -> n x d.
using VelocityField =
    std::function<RealArray(const RealArray& z, double r, double t, const RealArray& c)>;

/// Adapts network parameters to a VelocityField; increments `counter` per call.
VelocityField network_field(const net::NetworkParams& params, net::EvalCounter* counter);

/// Wraps any field with an evaluation counter.
VelocityField counted_field(VelocityField inner, net::EvalCounter* counter);

struct StageState {
    std::string label;  // coarse | renoised | final | step_k
    double time = 0.0;  // path time of the recorded state
    RealArray state;
    double wall_ms = 0.0;
};

struct SampleTrace {
    RealArray initial_noise;
    std::vector<StageState> stages;
    std::uint64_t nfe = 0;
};

struct SampleResult {
    RealArray x;
    SampleTrace trace;
};

SampleResult sample_meanflow_1step(const VelocityField& u, const RealArray& z1,
                                   const RealArray& c);
SampleResult sample_euler_reflow(const VelocityField& u, const RealArray& z1, const RealArray& c,
                                 int steps);
SampleResult sample_meanflow_multistep(const VelocityField& u, const RealArray& z1,
                                       const RealArray& c, int steps,
                                       bool displacement_scaling = true);

/// z_refine = alpha * z1 + (1 - alpha) * x_coarse, alpha in (0,1) exclusive.
RealArray renoise(const RealArray& x_coarse, const RealArray& z1, double alpha);

/// The 3-stage procedure. `fresh_rng` is required when spec.fresh_noise_renoise
/// is set (the renoise stage then draws new noise).
SampleResult sample_hybridflow(const VelocityField& u, const RealArray& z1, const RealArray& c,
                               const SamplerSpec& spec, RngState* fresh_rng = nullptr);

/// Dispatch on spec.mode.
SampleResult run_sampler(const VelocityField& u, const RealArray& z1, const RealArray& c,
                         const SamplerSpec& spec, RngState* fresh_rng = nullptr);

/// Convenience overloads that evaluate the given network.
SampleResult run_sampler(const net::NetworkParams& params, const RealArray& z1,
                         const RealArray& c, const SamplerSpec& spec,
                         RngState* fresh_rng = nullptr);

// -- output dump -----------------------------------------------------------------

/// CSV (sample_id, stage, dim_0..dim_{d-1}) of every stage state, plus a JSON
/// sidecar (<path>.meta.json) echoing the spec, NFE, seed and wall times.
void dump_samples(const std::filesystem::path& csv_path, const SampleResult& result,
                  const SamplerSpec& spec, std::uint64_t seed, const std::string& header_comment);

}  // namespace hf::samplers
