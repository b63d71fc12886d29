#include "hf/samplers.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

namespace hf::samplers {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

RealArray const_col(std::size_t n, double v) {
    return RealArray(n, 1, v);
}

}  // namespace

std::string sampler_mode_name(SamplerMode mode) {
    switch (mode) {
        case SamplerMode::euler_reflow:
            return "euler_reflow";
        case SamplerMode::meanflow_1step:
            return "meanflow_1step";
        case SamplerMode::meanflow_multistep:
            return "meanflow_multistep";
        case SamplerMode::hybridflow:
            return "hybridflow";
    }
    return "hybridflow";
}

SamplerMode sampler_mode_from_name(const std::string& name) {
    if (name == "euler_reflow") return SamplerMode::euler_reflow;
    if (name == "meanflow_1step") return SamplerMode::meanflow_1step;
    if (name == "meanflow_multistep") return SamplerMode::meanflow_multistep;
    if (name == "hybridflow") return SamplerMode::hybridflow;
    throw ValidationError("unknown sampler mode: " + name);
}

SamplerSpec SamplerSpec::meanflow_1step() {
    SamplerSpec s;
    s.mode = SamplerMode::meanflow_1step;
    s.steps = 1;
    return s;
}

SamplerSpec SamplerSpec::euler_reflow(int steps) {
    SamplerSpec s;
    s.mode = SamplerMode::euler_reflow;
    s.steps = steps;
    s.validate();
    return s;
}

SamplerSpec SamplerSpec::meanflow_multistep(int steps) {
    SamplerSpec s;
    s.mode = SamplerMode::meanflow_multistep;
    s.steps = steps;
    s.validate();
    return s;
}

SamplerSpec SamplerSpec::hybridflow(double alpha) {
    SamplerSpec s;
    s.mode = SamplerMode::hybridflow;
    s.alpha = alpha;
    s.t_refine = alpha;
    s.validate();
    return s;
}

void SamplerSpec::validate() const {
    switch (mode) {
        case SamplerMode::euler_reflow:
        case SamplerMode::meanflow_multistep:
            if (steps < 1) {
                throw DomainError("sampler: step count must be >= 1");
            }
            break;
        case SamplerMode::meanflow_1step:
            break;
        case SamplerMode::hybridflow:
            if (!(alpha > 0.0 && alpha < 1.0)) {
                throw DomainError("sampler: alpha must lie in the open interval (0,1)");
            }
            if (!(t_refine > 0.0 && t_refine < 1.0)) {
                throw DomainError("sampler: t_refine must lie in the open interval (0,1)");
            }
            break;
    }
}

std::uint64_t SamplerSpec::analytic_nfe() const {
    switch (mode) {
        case SamplerMode::meanflow_1step:
            return 1;
        case SamplerMode::hybridflow:
            return 2;
        case SamplerMode::euler_reflow:
        case SamplerMode::meanflow_multistep:
            return static_cast<std::uint64_t>(steps);
    }
    return 0;
}

std::string SamplerSpec::label() const {
    switch (mode) {
        case SamplerMode::meanflow_1step:
            return "meanflow_1step";
        case SamplerMode::euler_reflow:
            return "euler_reflow@" + std::to_string(steps);
        case SamplerMode::meanflow_multistep:
            return "meanflow_multistep@" + std::to_string(steps);
        case SamplerMode::hybridflow:
            return "hybridflow@" + fmt_double(alpha);
    }
    return "?";
}

VelocityField network_field(const net::NetworkParams& params, net::EvalCounter* counter) {
    return [&params, counter](const RealArray& z, double r, double t, const RealArray& c) {
        return net::forward(params, z, const_col(z.rows(), r), const_col(z.rows(), t), c, counter)
            .u;
    };
}

VelocityField counted_field(VelocityField inner, net::EvalCounter* counter) {
    return [inner = std::move(inner), counter](const RealArray& z, double r, double t,
                                               const RealArray& c) {
        if (counter != nullptr) {
            counter->forwards += 1;
        }
        return inner(z, r, t, c);
    };
}

SampleResult sample_meanflow_1step(const VelocityField& u, const RealArray& z1,
                                   const RealArray& c) {
    net::EvalCounter evals;
    const VelocityField counted = counted_field(u, &evals);
    SampleResult out;
    out.trace.initial_noise = z1;
    const double start = now_ms();
    out.x = z1 - counted(z1, 0.0, 1.0, c);
    out.trace.stages.push_back({"final", 0.0, out.x, now_ms() - start});
    out.trace.nfe = evals.forwards;
    return out;
}

SampleResult sample_euler_reflow(const VelocityField& u, const RealArray& z1, const RealArray& c,
                                 int steps) {
    if (steps < 1) {
        throw DomainError("euler_reflow: K must be >= 1");
    }
    net::EvalCounter evals;
    const VelocityField counted = counted_field(u, &evals);
    SampleResult out;
    out.trace.initial_noise = z1;
    RealArray z = z1;
    const double h = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double tk = 1.0 - static_cast<double>(k) * h;
        const double start = now_ms();
        RealArray v = counted(z, tk, tk, c);
        axpy(z, -h, v);
        out.trace.stages.push_back({"step_" + std::to_string(k + 1), tk - h, z,
                                    now_ms() - start});
    }
    out.x = std::move(z);
    out.trace.nfe = evals.forwards;
    return out;
}

SampleResult sample_meanflow_multistep(const VelocityField& u, const RealArray& z1,
                                       const RealArray& c, int steps,
                                       bool displacement_scaling) {
    if (steps < 1) {
        throw DomainError("meanflow_multistep: K must be >= 1");
    }
    net::EvalCounter evals;
    const VelocityField counted = counted_field(u, &evals);
    SampleResult out;
    out.trace.initial_noise = z1;
    RealArray z = z1;
    const double h = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t_hi = 1.0 - static_cast<double>(k) * h;
        const double t_lo = k + 1 == steps ? 0.0 : t_hi - h;
        // The interval evaluation is canonicalized to (r, t) = (t_lo, t_hi).
        const double start = now_ms();
        RealArray v = counted(z, t_lo, t_hi, c);
        axpy(z, displacement_scaling ? -(t_hi - t_lo) : -1.0, v);
        out.trace.stages.push_back({"step_" + std::to_string(k + 1), t_lo, z,
                                    now_ms() - start});
    }
    out.x = std::move(z);
    out.trace.nfe = evals.forwards;
    return out;
}

RealArray renoise(const RealArray& x_coarse, const RealArray& z1, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("renoise: alpha must lie in the open interval (0,1)");
    }
    if (!x_coarse.same_shape(z1)) {
        throw ShapeError("renoise: shape mismatch");
    }
    // Incremental form x + alpha (z1 - x): noise is added linearly, and a zero
    // displacement (z1 == x) is an exact fixed point.
    RealArray out(x_coarse.rows(), x_coarse.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = x_coarse.data()[i] + alpha * (z1.data()[i] - x_coarse.data()[i]);
    }
    return out;
}

SampleResult sample_hybridflow(const VelocityField& u, const RealArray& z1, const RealArray& c,
                               const SamplerSpec& spec, RngState* fresh_rng) {
    if (spec.mode != SamplerMode::hybridflow) {
        throw ValidationError("sample_hybridflow: spec.mode must be hybridflow");
    }
    spec.validate();
    if (spec.fresh_noise_renoise && fresh_rng == nullptr) {
        throw ValidationError("sample_hybridflow: fresh_noise_renoise requires an rng");
    }
    net::EvalCounter evals;
    const VelocityField counted = counted_field(u, &evals);
    SampleResult out;
    out.trace.initial_noise = z1;

    // Stage 1: global jump (identical arithmetic to sample_meanflow_1step).
    double start = now_ms();
    RealArray x_coarse = z1 - counted(z1, 0.0, 1.0, c);
    out.trace.stages.push_back({"coarse", 0.0, x_coarse, now_ms() - start});

    // Stage 2: renoise, reusing the jump noise unless configured otherwise.
    start = now_ms();
    RealArray z_refine =
        spec.fresh_noise_renoise
            ? renoise(x_coarse, gauss(*fresh_rng, z1.rows(), z1.cols()), spec.alpha)
            : renoise(x_coarse, z1, spec.alpha);
    out.trace.stages.push_back({"renoised", spec.t_refine, z_refine, now_ms() - start});

    // Stage 3: local refine at r = t = t_refine.
    start = now_ms();
    RealArray v = counted(z_refine, spec.t_refine, spec.t_refine, c);
    axpy(z_refine, spec.displacement_scaling ? -spec.t_refine : -1.0, v);
    out.trace.stages.push_back({"final", 0.0, z_refine, now_ms() - start});

    out.x = std::move(z_refine);
    out.trace.nfe = evals.forwards;
    return out;
}

SampleResult run_sampler(const VelocityField& u, const RealArray& z1, const RealArray& c,
                         const SamplerSpec& spec, RngState* fresh_rng) {
    spec.validate();
    switch (spec.mode) {
        case SamplerMode::meanflow_1step:
            return sample_meanflow_1step(u, z1, c);
        case SamplerMode::euler_reflow:
            return sample_euler_reflow(u, z1, c, spec.steps);
        case SamplerMode::meanflow_multistep:
            return sample_meanflow_multistep(u, z1, c, spec.steps, spec.displacement_scaling);
        case SamplerMode::hybridflow:
            return sample_hybridflow(u, z1, c, spec, fresh_rng);
    }
    throw ValidationError("run_sampler: unknown mode");
}

SampleResult run_sampler(const net::NetworkParams& params, const RealArray& z1,
                         const RealArray& c, const SamplerSpec& spec, RngState* fresh_rng) {
    return run_sampler(network_field(params, nullptr), z1, c, spec, fresh_rng);
}

void dump_samples(const std::filesystem::path& csv_path, const SampleResult& result,
                  const SamplerSpec& spec, std::uint64_t seed,
                  const std::string& header_comment) {
    std::ofstream out(csv_path);
    if (!out) {
        throw IoError("cannot open sample dump: " + csv_path.string());
    }
    if (!header_comment.empty()) {
        out << "# " << header_comment << "\n";
    }
    const std::size_t d = result.x.cols();
    out << "sample_id,stage";
    for (std::size_t j = 0; j < d; ++j) {
        out << ",dim_" << j;
    }
    out << "\n";
    auto emit = [&](const std::string& stage, const RealArray& states) {
        for (std::size_t i = 0; i < states.rows(); ++i) {
            out << i << "," << stage;
            for (std::size_t j = 0; j < d; ++j) {
                out << "," << fmt_double(states(i, j));
            }
            out << "\n";
        }
    };
    emit("noise", result.trace.initial_noise);
    for (const StageState& s : result.trace.stages) {
        emit(s.label, s.state);
    }
    if (!out) {
        throw IoError("sample dump write failed: " + csv_path.string());
    }

    nlohmann::json meta;
    meta["sampler"] = spec.label();
    meta["mode"] = sampler_mode_name(spec.mode);
    meta["steps"] = spec.steps;
    meta["alpha"] = spec.alpha;
    meta["t_refine"] = spec.t_refine;
    meta["displacement_scaling"] = spec.displacement_scaling;
    meta["fresh_noise_renoise"] = spec.fresh_noise_renoise;
    meta["nfe"] = result.trace.nfe;
    meta["seed"] = seed;
    nlohmann::json stages = nlohmann::json::array();
    for (const StageState& s : result.trace.stages) {
        stages.push_back({{"label", s.label}, {"time", s.time}, {"wall_ms", s.wall_ms}});
    }
    meta["stages"] = std::move(stages);
    std::ofstream mout(csv_path.string() + ".meta.json");
    if (!mout) {
        throw IoError("cannot open sample dump sidecar for: " + csv_path.string());
    }
    mout << meta.dump(2) << "\n";
}

}  // namespace hf::samplers
