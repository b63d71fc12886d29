#include "hf/net.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace hf::net {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double act_value(Activation a, double x) {
    switch (a) {
        case Activation::gelu:
            return x * (0.5 * (1.0 + std::erf(x * kInvSqrt2)));
        case Activation::softplus:
            return x > 30.0 ? x : std::log1p(std::exp(x));
        case Activation::tanh:
            return std::tanh(x);
        case Activation::identity:
            return x;
    }
    return x;
}

double act_deriv(Activation a, double x) {
    switch (a) {
        case Activation::gelu:
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        case Activation::softplus:
            return 1.0 / (1.0 + std::exp(-x));
        case Activation::tanh: {
            const double th = std::tanh(x);
            return 1.0 - th * th;
        }
        case Activation::identity:
            return 1.0;
    }
    return 1.0;
}

void apply_activation(Activation a, RealArray& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x.data()[i] = act_value(a, x.data()[i]);
    }
}

// Value and derivative in one sweep, sharing the transcendental evaluations.
// The value expressions are kept identical to act_value so primal outputs stay
// bit-equal between forward and forward_jvp.
void act_value_and_deriv(Activation a, const RealArray& pre, RealArray& value_out,
                         RealArray& deriv_out) {
    const std::size_t size = pre.size();
    switch (a) {
        case Activation::gelu:
            for (std::size_t i = 0; i < size; ++i) {
                const double x = pre.data()[i];
                const double phi_c = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                value_out.data()[i] = x * phi_c;
                deriv_out.data()[i] = phi_c + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            }
            break;
        case Activation::softplus:
            for (std::size_t i = 0; i < size; ++i) {
                const double x = pre.data()[i];
                value_out.data()[i] = x > 30.0 ? x : std::log1p(std::exp(x));
                deriv_out.data()[i] = 1.0 / (1.0 + std::exp(-x));
            }
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < size; ++i) {
                const double th = std::tanh(pre.data()[i]);
                value_out.data()[i] = th;
                deriv_out.data()[i] = 1.0 - th * th;
            }
            break;
        case Activation::identity:
            for (std::size_t i = 0; i < size; ++i) {
                value_out.data()[i] = pre.data()[i];
                deriv_out.data()[i] = 1.0;
            }
            break;
    }
}

void add_bias(RealArray& x, const RealArray& bias) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            x(i, j) += bias(0, j);
        }
    }
}

void check_inputs(const NetworkArch& arch, const RealArray& z, const RealArray& r,
                  const RealArray& t, const RealArray& c) {
    const std::size_t n = z.rows();
    if (z.cols() != arch.input_dim) {
        throw ShapeError("forward: z has width " + std::to_string(z.cols()) + ", arch expects " +
                         std::to_string(arch.input_dim));
    }
    if (c.rows() != n || c.cols() != arch.cond_dim) {
        throw ShapeError("forward: condition batch must be n x cond_dim");
    }
    if (r.rows() != n || r.cols() != 1 || t.rows() != n || t.cols() != 1) {
        throw ShapeError("forward: r and t must be n x 1 columns");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double ri = r(i, 0), ti = t(i, 0);
        if (!(ri >= 0.0 && ti <= 1.0)) {
            throw DomainError("forward: times must lie in [0,1] (row " + std::to_string(i) + ")");
        }
        if (ri > ti) {
            throw DomainError("forward: r > t at row " + std::to_string(i));
        }
    }
}

/// Writes the embedded time features for scalar s into dst[0 .. 1+2m).
void time_features(double s, std::size_t m, double* dst) {
    dst[0] = s;
    double freq = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double w = kTwoPi * freq * s;
        dst[1 + 2 * j] = std::sin(w);
        dst[2 + 2 * j] = std::cos(w);
        freq *= 2.0;
    }
}

/// d/ds of time_features times the scalar tangent ds.
void time_features_tangent(double s, std::size_t m, double ds, double* dst) {
    dst[0] = ds;
    double freq = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double w = kTwoPi * freq * s;
        const double scale = kTwoPi * freq * ds;
        dst[1 + 2 * j] = scale * std::cos(w);
        dst[2 + 2 * j] = -scale * std::sin(w);
        freq *= 2.0;
    }
}

RealArray build_features(const NetworkArch& arch, const RealArray& z, const RealArray& r,
                         const RealArray& t, const RealArray& c) {
    const std::size_t n = z.rows();
    const std::size_t tf = arch.time_feature_dim();
    RealArray out(n, arch.feature_dim());
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * out.cols();
        std::size_t off = 0;
        for (std::size_t j = 0; j < arch.input_dim; ++j) {
            row[off++] = z(i, j);
        }
        for (std::size_t j = 0; j < arch.cond_dim; ++j) {
            row[off++] = c(i, j);
        }
        time_features(r(i, 0), arch.time_embed_dim, row + off);
        off += tf;
        time_features(t(i, 0), arch.time_embed_dim, row + off);
    }
    return out;
}

RealArray build_feature_tangent(const NetworkArch& arch, const RealArray& r, const RealArray& t,
                                const InputTangent& tangent) {
    const std::size_t n = r.rows();
    const std::size_t tf = arch.time_feature_dim();
    RealArray out(n, arch.feature_dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * out.cols();
        std::size_t off = 0;
        for (std::size_t j = 0; j < arch.input_dim; ++j) {
            row[off++] = tangent.dz(i, j);
        }
        off += arch.cond_dim;  // c carries no tangent
        time_features_tangent(r(i, 0), arch.time_embed_dim, tangent.dr, row + off);
        off += tf;
        time_features_tangent(t(i, 0), arch.time_embed_dim, tangent.dt, row + off);
    }
    return out;
}

}  // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::gelu:
            return "gelu";
        case Activation::softplus:
            return "softplus";
        case Activation::tanh:
            return "tanh";
        case Activation::identity:
            return "identity";
    }
    return "gelu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "gelu") return Activation::gelu;
    if (name == "softplus") return Activation::softplus;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ValidationError("unknown activation: " + name);
}

void NetworkArch::validate() const {
    if (input_dim < 1) {
        throw ValidationError("arch: input_dim must be >= 1");
    }
    if (hidden.empty()) {
        throw ValidationError("arch: at least one hidden layer required");
    }
    for (std::size_t w : hidden) {
        if (w < 1) {
            throw ValidationError("arch: hidden widths must be >= 1");
        }
    }
}

void NetworkParams::validate() const {
    arch.validate();
    const std::size_t layers = arch.hidden.size() + 1;
    if (weights.size() != layers || biases.size() != layers) {
        throw ValidationError("params: layer count inconsistent with arch");
    }
    std::size_t fan_in = arch.feature_dim();
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t fan_out = l < arch.hidden.size() ? arch.hidden[l] : arch.input_dim;
        if (weights[l].rows() != fan_in || weights[l].cols() != fan_out) {
            throw ValidationError("params: weight shape mismatch at layer " + std::to_string(l));
        }
        if (biases[l].rows() != 1 || biases[l].cols() != fan_out) {
            throw ValidationError("params: bias shape mismatch at layer " + std::to_string(l));
        }
        if (!weights[l].all_finite() || !biases[l].all_finite()) {
            throw NumericError("params: non-finite entries at layer " + std::to_string(l));
        }
        fan_in = fan_out;
    }
}

NetworkParams init_params(const NetworkArch& arch, RngState& rng) {
    arch.validate();
    NetworkParams params;
    params.arch = arch;
    std::size_t fan_in = arch.feature_dim();
    for (std::size_t l = 0; l <= arch.hidden.size(); ++l) {
        const std::size_t fan_out =
            l < arch.hidden.size() ? arch.hidden[l] : arch.input_dim;
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        RealArray w = gauss(rng, fan_in, fan_out);
        for (std::size_t i = 0; i < w.size(); ++i) {
            w.data()[i] *= scale;
        }
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(1, fan_out, 0.0);
        fan_in = fan_out;
    }
    return params;
}

ForwardResult forward(const NetworkParams& params, const RealArray& z, const RealArray& r,
                      const RealArray& t, const RealArray& c, EvalCounter* counter) {
    check_inputs(params.arch, z, r, t, c);
    if (counter != nullptr) {
        counter->forwards += 1;
    }
    const NetworkArch& arch = params.arch;

    ForwardTrace trace;
    trace.arch = arch;
    trace.batch = z.rows();
    trace.features = build_features(arch, z, r, t, c);

    RealArray h = trace.features;
    for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
        RealArray pre = matmul(h, params.weights[l]);
        add_bias(pre, params.biases[l]);
        trace.pre.push_back(pre);
        apply_activation(arch.activation, pre);
        trace.act.push_back(pre);
        h = std::move(pre);
    }
    RealArray u = matmul(h, params.weights.back());
    add_bias(u, params.biases.back());
    if (!u.all_finite()) {
        throw NumericError("forward: non-finite network output");
    }
    return {std::move(u), std::move(trace)};
}

JvpResult forward_jvp(const NetworkParams& params, const RealArray& z, const RealArray& r,
                      const RealArray& t, const RealArray& c, const InputTangent& tangent,
                      EvalCounter* counter) {
    check_inputs(params.arch, z, r, t, c);
    if (tangent.dz.rows() != z.rows() || tangent.dz.cols() != z.cols()) {
        throw ShapeError("forward_jvp: tangent dz must match z");
    }
    if (counter != nullptr) {
        counter->forwards += 1;
    }
    const NetworkArch& arch = params.arch;

    ForwardTrace trace;
    trace.arch = arch;
    trace.batch = z.rows();
    trace.features = build_features(arch, z, r, t, c);

    // Primal ops mirror forward() exactly; tangent ops run on separate arrays
    // so the primal output stays bit-identical.
    RealArray h = trace.features;
    RealArray dh = build_feature_tangent(arch, r, t, tangent);
    for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
        RealArray pre = matmul(h, params.weights[l]);
        add_bias(pre, params.biases[l]);
        RealArray dpre = matmul(dh, params.weights[l]);
        RealArray value(pre.rows(), pre.cols());
        RealArray deriv(pre.rows(), pre.cols());
        act_value_and_deriv(arch.activation, pre, value, deriv);
        dpre = hadamard(dpre, deriv);
        trace.pre.push_back(std::move(pre));
        trace.act.push_back(value);
        trace.dact.push_back(std::move(deriv));
        h = std::move(value);
        dh = std::move(dpre);
    }
    RealArray u = matmul(h, params.weights.back());
    add_bias(u, params.biases.back());
    RealArray du = matmul(dh, params.weights.back());
    if (!u.all_finite() || !du.all_finite()) {
        throw NumericError("forward_jvp: non-finite output");
    }
    return {std::move(u), std::move(du), std::move(trace)};
}

ParamGrads backward(const NetworkParams& params, const ForwardTrace& trace,
                    const RealArray& cotangent) {
    if (trace.arch != params.arch) {
        throw TraceError("backward: trace was recorded under a different architecture");
    }
    if (trace.batch != cotangent.rows() || cotangent.cols() != params.arch.input_dim) {
        throw TraceError("backward: cotangent shape does not match trace batch");
    }
    if (trace.pre.size() != params.arch.hidden.size() ||
        trace.features.rows() != trace.batch ||
        trace.features.cols() != params.arch.feature_dim()) {
        throw TraceError("backward: incomplete or stale trace");
    }
    const std::size_t layers = params.layer_count();
    ParamGrads grads;
    grads.weights.resize(layers);
    grads.biases.resize(layers);

    // Output layer.
    RealArray delta = cotangent;
    grads.weights[layers - 1] = matmul_tn(trace.act.back(), delta);
    grads.biases[layers - 1] = col_sums(delta);

    const bool cached_derivs = trace.dact.size() == params.arch.hidden.size();
    for (std::size_t l = layers - 1; l-- > 0;) {
        RealArray back = matmul_nt(delta, params.weights[l + 1]);
        if (cached_derivs) {
            back = hadamard(back, trace.dact[l]);
        } else {
            const RealArray& pre = trace.pre[l];
            for (std::size_t i = 0; i < back.size(); ++i) {
                back.data()[i] *= act_deriv(params.arch.activation, pre.data()[i]);
            }
        }
        delta = std::move(back);
        const RealArray& input = l == 0 ? trace.features : trace.act[l - 1];
        grads.weights[l] = matmul_tn(input, delta);
        grads.biases[l] = col_sums(delta);
    }
    return grads;
}

AdamState AdamState::init(const NetworkParams& params, const AdamConfig& config) {
    AdamState state;
    state.config = config;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        state.m_weights.emplace_back(params.weights[l].rows(), params.weights[l].cols(), 0.0);
        state.v_weights.emplace_back(params.weights[l].rows(), params.weights[l].cols(), 0.0);
        state.m_biases.emplace_back(1, params.biases[l].cols(), 0.0);
        state.v_biases.emplace_back(1, params.biases[l].cols(), 0.0);
    }
    return state;
}

namespace {

void adam_update(RealArray& theta, const RealArray& g, RealArray& m, RealArray& v,
                 const AdamConfig& cfg, double corr1, double corr2, double lr) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
        v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = m.data()[i] / corr1;
        const double vhat = v.data()[i] / corr2;
        theta.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace

void adam_step(NetworkParams& params, const ParamGrads& grads, AdamState& state, double lr_scale) {
    if (grads.weights.size() != params.layer_count()) {
        throw ShapeError("adam_step: gradient layer count mismatch");
    }
    state.step += 1;
    const double corr1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
    const double lr = state.config.lr * lr_scale;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        if (!grads.weights[l].same_shape(params.weights[l])) {
            throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
        }
        adam_update(params.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l],
                    state.config, corr1, corr2, lr);
        adam_update(params.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l],
                    state.config, corr1, corr2, lr);
    }
}

// -- checkpoint ---------------------------------------------------------------

namespace {

nlohmann::json arch_to_json(const NetworkArch& arch) {
    return {
        {"input_dim", arch.input_dim},
        {"cond_dim", arch.cond_dim},
        {"hidden", arch.hidden},
        {"activation", activation_name(arch.activation)},
        {"time_embed_dim", arch.time_embed_dim},
    };
}

NetworkArch arch_from_json(const nlohmann::json& j) {
    NetworkArch arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.cond_dim = j.at("cond_dim").get<std::size_t>();
    arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    arch.activation = activation_from_name(j.at("activation").get<std::string>());
    arch.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    return arch;
}

std::vector<double> flatten(const RealArray& a) {
    return {a.data(), a.data() + a.size()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params,
                     const std::string& config_echo_json, std::uint64_t seed) {
    params.validate();
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = "hybridflow-checkpoint";
    doc["arch"] = arch_to_json(params.arch);
    doc["seed"] = seed;
    doc["config_echo"] =
        config_echo_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_echo_json);
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        weights.push_back(flatten(params.weights[l]));
        biases.push_back(flatten(params.biases[l]));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = std::move(biases);

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    out << doc.dump(2) << "\n";
    if (!out) {
        throw IoError("checkpoint write failed: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint parse error: " + std::string(e.what()));
    }
    if (doc.value("kind", "") != "hybridflow-checkpoint" || doc.value("format_version", 0) != 1) {
        throw ValidationError("not a recognized checkpoint document: " + path.string());
    }
    Checkpoint ckpt;
    ckpt.params.arch = arch_from_json(doc.at("arch"));
    ckpt.seed = doc.value("seed", 0ull);
    ckpt.config_echo_json = doc.at("config_echo").dump();

    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    std::size_t fan_in = ckpt.params.arch.feature_dim();
    for (std::size_t l = 0; l <= ckpt.params.arch.hidden.size(); ++l) {
        const std::size_t fan_out =
            l < ckpt.params.arch.hidden.size() ? ckpt.params.arch.hidden[l] : ckpt.params.arch.input_dim;
        const auto w = weights.at(l).get<std::vector<double>>();
        const auto b = biases.at(l).get<std::vector<double>>();
        if (w.size() != fan_in * fan_out || b.size() != fan_out) {
            throw ValidationError("checkpoint parameter size mismatch at layer " + std::to_string(l));
        }
        RealArray wa(fan_in, fan_out);
        std::copy(w.begin(), w.end(), wa.data());
        RealArray ba(1, fan_out);
        std::copy(b.begin(), b.end(), ba.data());
        ckpt.params.weights.push_back(std::move(wa));
        ckpt.params.biases.push_back(std::move(ba));
        fan_in = fan_out;
    }
    ckpt.params.validate();
    return ckpt;
}

}  // namespace hf::net
