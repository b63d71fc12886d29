#pragma once

// Conditional average-velocity network u(z, r, t, c): an MLP over the feature
// vector [z | c | timefeat(r) | timefeat(t)] where timefeat(s) is the raw
// scalar plus sin/cos pairs at frequencies 2^0 .. 2^(m-1) cycles. Supports
// plain forward evaluation, forward-mode JVP with respect to (z, r, t), and
// reverse-mode parameter gradients through a cached trace. All arithmetic is
// double precision; the primal path of forward_jvp is instruction-identical
// to forward, so both return bit-equal outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hf/numkit.hpp"

namespace hf::net {

enum class Activation { gelu, softplus, tanh, identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct NetworkArch {
    std::size_t input_dim = 2;                  // d, the sample dimension
    std::size_t cond_dim = 2;                   // raw condition width
    std::vector<std::size_t> hidden = {128, 128, 128};
    Activation activation = Activation::gelu;
    std::size_t time_embed_dim = 4;             // sin/cos frequency pairs per scalar

    /// Width of one embedded time scalar: raw value + sin/cos pairs.
    std::size_t time_feature_dim() const { return 1 + 2 * time_embed_dim; }
    /// Width of the assembled input layer.
    std::size_t feature_dim() const {
        return input_dim + cond_dim + 2 * time_feature_dim();
    }
    void validate() const;
    bool operator==(const NetworkArch&) const = default;
};

struct NetworkParams {
    NetworkArch arch;
    std::vector<RealArray> weights;  // weights[l]: (fan_in x fan_out)
    std::vector<RealArray> biases;   // biases[l]:  (1 x fan_out)

    std::size_t layer_count() const { return weights.size(); }
    void validate() const;
};

struct ParamGrads {
    std::vector<RealArray> weights;
    std::vector<RealArray> biases;
};

/// Cached batch state from one forward pass, sufficient for backward.
struct ForwardTrace {
    NetworkArch arch;
    std::size_t batch = 0;
    RealArray features;               // batch x feature_dim
    std::vector<RealArray> pre;       // pre-activations per hidden layer
    std::vector<RealArray> act;       // activations per hidden layer
    std::vector<RealArray> dact;      // activation derivatives (filled by forward_jvp)
};

/// Directional input perturbation (dz per row, shared dr/dt scalars).
/// The MeanFlow training tangent is (dz, dr, dt) = (v_star, 0, 1).
struct InputTangent {
    RealArray dz;      // batch x input_dim
    double dr = 0.0;
    double dt = 0.0;
};

/// Counts network forward evaluations; samplers thread one through to report
/// honest NFE numbers.
struct EvalCounter {
    std::uint64_t forwards = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<RealArray> m_weights, v_weights;
    std::vector<RealArray> m_biases, v_biases;

    static AdamState init(const NetworkParams& params, const AdamConfig& config);
};

/// Weights ~ N(0, 1/fan_in) (unit gain), biases zero. Draw order is layer by
/// layer, weights row-major, so a fixed rng yields bit-identical params.
NetworkParams init_params(const NetworkArch& arch, RngState& rng);

struct ForwardResult {
    RealArray u;
    ForwardTrace trace;
};

/// u(z, r, t, c) for a batch. r and t are n x 1 columns with 0 <= r <= t <= 1
/// per row. Throws DomainError on r > t or out-of-range times, ShapeError on
/// dimension mismatches, NumericError if the output is not finite.
ForwardResult forward(const NetworkParams& params, const RealArray& z, const RealArray& r,
                      const RealArray& t, const RealArray& c, EvalCounter* counter = nullptr);

struct JvpResult {
    RealArray u;
    RealArray du;       // (du/dz) dz + (du/dr) dr + (du/dt) dt
    ForwardTrace trace;
};

/// Forward pass with tangent propagation in the same sweep. u is bit-equal to
/// forward()'s output on the same inputs.
JvpResult forward_jvp(const NetworkParams& params, const RealArray& z, const RealArray& r,
                      const RealArray& t, const RealArray& c, const InputTangent& tangent,
                      EvalCounter* counter = nullptr);

/// Gradients of sum(u .* cotangent) with respect to every parameter.
/// The trace must come from a forward pass of `params` on the same batch.
ParamGrads backward(const NetworkParams& params, const ForwardTrace& trace,
                    const RealArray& cotangent);

/// One bias-corrected Adam update, in place. The learning rate used is
/// state.config.lr * lr_scale (scale hook for schedules).
void adam_step(NetworkParams& params, const ParamGrads& grads, AdamState& state,
               double lr_scale = 1.0);

// -- checkpoint ---------------------------------------------------------------

/// Self-describing JSON document: format version, arch, flat row-major
/// parameter arrays, a free-form config echo, and the originating seed.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params,
                     const std::string& config_echo_json, std::uint64_t seed);

struct Checkpoint {
    NetworkParams params;
    std::string config_echo_json;
    std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hf::net
