#include "hf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "hf/svg.hpp"

namespace hf::harness {

namespace {

using nlohmann::json;

json task_to_json(const tasks::TaskSpec& t) {
    json j;
    j["name"] = t.name();
    j["dim"] = t.dim;
    j["cond_dim"] = t.cond_dim;
    switch (t.kind) {
        case tasks::TaskKind::cond_gauss: {
            j["mean_base"] = std::vector<double>(t.gauss_mean_base.data(),
                                                 t.gauss_mean_base.data() + t.gauss_mean_base.size());
            j["sigma"] = t.gauss_sigma;
            j["cond_coupling"] = t.cond_coupling;
            break;
        }
        case tasks::TaskKind::cond_gmm2d:
            j["components"] = t.gmm_components;
            j["radius"] = t.gmm_radius;
            j["sigma"] = t.gmm_sigma;
            break;
        case tasks::TaskKind::action_chunk_spline:
            j["horizon"] = t.horizon;
            j["dof"] = t.dof;
            j["knots"] = t.knots;
            break;
    }
    return j;
}

tasks::TaskSpec task_from_json(const json& j) {
    tasks::TaskSpec t;
    t.kind = tasks::task_from_name(j.at("name").get<std::string>());
    t.dim = j.at("dim").get<std::size_t>();
    t.cond_dim = j.at("cond_dim").get<std::size_t>();
    switch (t.kind) {
        case tasks::TaskKind::cond_gauss: {
            const auto mean = j.at("mean_base").get<std::vector<double>>();
            t.gauss_mean_base = RealArray(1, mean.size());
            std::copy(mean.begin(), mean.end(), t.gauss_mean_base.data());
            t.gauss_sigma = j.at("sigma").get<double>();
            t.cond_coupling = j.at("cond_coupling").get<double>();
            break;
        }
        case tasks::TaskKind::cond_gmm2d:
            t.gmm_components = j.at("components").get<std::size_t>();
            t.gmm_radius = j.at("radius").get<double>();
            t.gmm_sigma = j.at("sigma").get<double>();
            break;
        case tasks::TaskKind::action_chunk_spline:
            t.horizon = j.at("horizon").get<std::size_t>();
            t.dof = j.at("dof").get<std::size_t>();
            t.knots = j.at("knots").get<std::size_t>();
            break;
    }
    t.validate();
    return t;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double median_of(std::vector<double> values) {
    if (values.empty()) {
        throw DomainError("median of empty list");
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

ExperimentConfig ExperimentConfig::default_gmm() {
    ExperimentConfig cfg;
    cfg.task = tasks::TaskSpec::cond_gmm2d();
    cfg.arch.input_dim = cfg.task.dim;
    cfg.arch.cond_dim = cfg.task.cond_dim;
    cfg.arch.hidden = {128, 128, 128};
    cfg.time_sampling.dist = flowcore::TimeSamplingConfig::Dist::uniform;
    cfg.time_sampling.p_degenerate = 0.5;
    cfg.adam.lr = 1e-3;
    cfg.lr_schedule = "cosine";
    cfg.train_steps = 20000;
    cfg.batch_size = 256;
    cfg.eval_every = 500;
    cfg.val_size = 2048;
    cfg.seed = 0;
    return cfg;
}

ExperimentConfig ExperimentConfig::default_gauss() {
    ExperimentConfig cfg = default_gmm();
    cfg.task = tasks::TaskSpec::cond_gauss();
    cfg.arch.input_dim = cfg.task.dim;
    cfg.arch.cond_dim = cfg.task.cond_dim;
    // Near-deterministic conditional data; logit-normal time sampling keeps
    // the sharp small-t region of the velocity field off the training path.
    cfg.time_sampling.dist = flowcore::TimeSamplingConfig::Dist::logit_normal;
    cfg.train_steps = 10000;
    return cfg;
}

void ExperimentConfig::validate() const {
    task.validate();
    arch.validate();
    time_sampling.validate();
    if (arch.input_dim != task.dim || arch.cond_dim != task.cond_dim) {
        throw ValidationError("config: arch dimensions must match the task");
    }
    if (train_steps < 0 || batch_size < 1 || eval_every < 1 || val_size < 2) {
        throw ValidationError("config: counts out of range");
    }
    if (lr_schedule != "cosine" && lr_schedule != "constant") {
        throw ValidationError("config: lr_schedule must be cosine or constant");
    }
    if (out_dir.empty()) {
        throw ValidationError("config: out_dir must be set");
    }
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["task"] = task_to_json(task);
    j["arch"] = {{"input_dim", arch.input_dim},
                 {"cond_dim", arch.cond_dim},
                 {"hidden", arch.hidden},
                 {"activation", net::activation_name(arch.activation)},
                 {"time_embed_dim", arch.time_embed_dim}};
    j["time_sampling"] = {{"p_degenerate", time_sampling.p_degenerate},
                          {"dist", flowcore::time_dist_name(time_sampling.dist)},
                          {"logit_mu", time_sampling.logit_mu},
                          {"logit_sigma", time_sampling.logit_sigma}};
    j["adam"] = {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
    j["lr_schedule"] = lr_schedule;
    j["train_steps"] = train_steps;
    j["batch_size"] = batch_size;
    j["eval_every"] = eval_every;
    j["val_size"] = val_size;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("config parse error: " + std::string(e.what()));
    }
    ExperimentConfig cfg;
    cfg.task = task_from_json(j.at("task"));
    const json& a = j.at("arch");
    cfg.arch.input_dim = a.at("input_dim").get<std::size_t>();
    cfg.arch.cond_dim = a.at("cond_dim").get<std::size_t>();
    cfg.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    cfg.arch.activation = net::activation_from_name(a.at("activation").get<std::string>());
    cfg.arch.time_embed_dim = a.at("time_embed_dim").get<std::size_t>();
    const json& ts = j.at("time_sampling");
    cfg.time_sampling.p_degenerate = ts.at("p_degenerate").get<double>();
    cfg.time_sampling.dist = flowcore::time_dist_from_name(ts.at("dist").get<std::string>());
    cfg.time_sampling.logit_mu = ts.at("logit_mu").get<double>();
    cfg.time_sampling.logit_sigma = ts.at("logit_sigma").get<double>();
    const json& ad = j.at("adam");
    cfg.adam.lr = ad.at("lr").get<double>();
    cfg.adam.beta1 = ad.at("beta1").get<double>();
    cfg.adam.beta2 = ad.at("beta2").get<double>();
    cfg.adam.eps = ad.at("eps").get<double>();
    cfg.lr_schedule = j.at("lr_schedule").get<std::string>();
    cfg.train_steps = j.at("train_steps").get<std::uint64_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.eval_every = j.at("eval_every").get<std::uint64_t>();
    cfg.val_size = j.at("val_size").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config: " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open config for writing: " + path.string());
    }
    out << to_json() << "\n";
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return to_json() == other.to_json();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a(config.to_json());
}

std::string provenance_comment(const ExperimentConfig& config) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "config_hash=%016llx seed=%llu",
                  static_cast<unsigned long long>(config_hash(config)),
                  static_cast<unsigned long long>(config.seed));
    return buf;
}

namespace {

// Substream labels off the experiment master seed.
enum Stream : std::uint64_t {
    kInitStream = 1,
    kTrainStream = 2,
    kValReflowStream = 3,
    kValMeanflowStream = 4,
    kEvalReference = 10,
    kEvalNoiseBase = 11,
};

flowcore::PathBatch draw_training_batch(const tasks::TaskSpec& task,
                                        const flowcore::TimeSamplingConfig& times, RngState& rng,
                                        std::size_t n, bool force_mode = false,
                                        bool degenerate = false) {
    tasks::ConditionedBatch data = tasks::draw(task, rng, n);
    RealArray z1 = gauss(rng, n, task.dim);
    RealArray r(n, 1), t(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        flowcore::TimePair pair{};
        if (force_mode) {
            flowcore::TimeSamplingConfig forced = times;
            forced.p_degenerate = degenerate ? 1.0 : 0.0;
            pair = flowcore::sample_time_pair(rng, forced);
        } else {
            pair = flowcore::sample_time_pair(rng, times);
        }
        r(i, 0) = pair.r;
        t(i, 0) = pair.t;
    }
    return flowcore::assemble_path_batch(data.x0, z1, data.c, r, t);
}

void dump_diagnostic_batch(const std::filesystem::path& path, const flowcore::PathBatch& batch) {
    std::ofstream out(path);
    if (!out) {
        return;  // diagnostics are best effort on a failing run
    }
    out << "row,r,t";
    for (std::size_t j = 0; j < batch.x0.cols(); ++j) out << ",x0_" << j;
    for (std::size_t j = 0; j < batch.z1.cols(); ++j) out << ",z1_" << j;
    for (std::size_t j = 0; j < batch.c.cols(); ++j) out << ",c_" << j;
    out << "\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out << i << "," << fmt_double(batch.r(i, 0)) << "," << fmt_double(batch.t(i, 0));
        for (std::size_t j = 0; j < batch.x0.cols(); ++j) out << "," << fmt_double(batch.x0(i, j));
        for (std::size_t j = 0; j < batch.z1.cols(); ++j) out << "," << fmt_double(batch.z1(i, j));
        for (std::size_t j = 0; j < batch.c.cols(); ++j) out << "," << fmt_double(batch.c(i, j));
        out << "\n";
    }
}

}  // namespace

TrainResult train(const ExperimentConfig& config) {
    config.validate();
    const std::filesystem::path out_dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }

    RngState master(config.seed);
    RngState init_rng = master.split(kInitStream);
    RngState train_rng = master.split(kTrainStream);
    RngState val_reflow_rng = master.split(kValReflowStream);
    RngState val_meanflow_rng = master.split(kValMeanflowStream);

    net::NetworkParams params = net::init_params(config.arch, init_rng);
    net::AdamState opt = net::AdamState::init(params, config.adam);

    const flowcore::PathBatch heldout_reflow = draw_training_batch(
        config.task, config.time_sampling, val_reflow_rng, config.val_size, true, true);
    const flowcore::PathBatch heldout_meanflow = draw_training_batch(
        config.task, config.time_sampling, val_meanflow_rng, config.val_size, true, false);

    flowcore::TrainLogWriter log(out_dir / "train_log.csv", provenance_comment(config));
    const double t0 = now_ms();

    std::vector<double> reflow_history, meanflow_history;
    double window_loss = 0.0;
    std::uint64_t window_count = 0;
    double val_reflow = metrics::validation_loss(params, heldout_reflow, metrics::ValMode::reflow);
    double val_meanflow =
        metrics::validation_loss(params, heldout_meanflow, metrics::ValMode::meanflow);
    log.append(0, 0.0, 0.0, val_reflow, val_meanflow, config.seed);

    for (std::uint64_t step = 1; step <= config.train_steps; ++step) {
        flowcore::PathBatch batch =
            draw_training_batch(config.task, config.time_sampling, train_rng, config.batch_size);
        double lr_scale = 1.0;
        if (config.lr_schedule == "cosine") {
            lr_scale = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) /
                                             static_cast<double>(config.train_steps)));
        }
        double loss = 0.0;
        try {
            loss = flowcore::unified_loss_step(params, batch, opt, lr_scale);
        } catch (const NumericError&) {
            dump_diagnostic_batch(out_dir / "diverged_batch.csv", batch);
            throw;
        }
        if (!std::isfinite(loss)) {
            dump_diagnostic_batch(out_dir / "diverged_batch.csv", batch);
            throw NumericError("training diverged at step " + std::to_string(step) +
                               "; offending batch dumped to diverged_batch.csv");
        }
        window_loss += loss;
        window_count += 1;

        if (step % config.eval_every == 0 || step == config.train_steps) {
            val_reflow = metrics::validation_loss(params, heldout_reflow, metrics::ValMode::reflow);
            val_meanflow =
                metrics::validation_loss(params, heldout_meanflow, metrics::ValMode::meanflow);
            reflow_history.push_back(val_reflow);
            meanflow_history.push_back(val_meanflow);
            log.append(step, now_ms() - t0, window_loss / static_cast<double>(window_count),
                       val_reflow, val_meanflow, config.seed);
            window_loss = 0.0;
            window_count = 0;
        }
    }

    TrainResult result;
    result.checkpoint_path = out_dir / "checkpoint.json";
    result.log_path = out_dir / "train_log.csv";
    net::save_checkpoint(result.checkpoint_path, params, config.to_json(), config.seed);
    result.final_val_reflow = val_reflow;
    result.final_val_meanflow = val_meanflow;
    const std::size_t tail = std::min<std::size_t>(5, reflow_history.size());
    if (tail > 0) {
        result.plateau_val_reflow = median_of(
            {reflow_history.end() - static_cast<std::ptrdiff_t>(tail), reflow_history.end()});
        result.plateau_val_meanflow = median_of(
            {meanflow_history.end() - static_cast<std::ptrdiff_t>(tail), meanflow_history.end()});
    } else {
        result.plateau_val_reflow = val_reflow;
        result.plateau_val_meanflow = val_meanflow;
    }
    result.params = std::move(params);
    return result;
}

std::vector<samplers::SamplerSpec> default_sampler_set(bool displacement_scaling,
                                                       bool fresh_noise) {
    std::vector<samplers::SamplerSpec> specs;
    specs.push_back(samplers::SamplerSpec::meanflow_1step());
    for (int k : {2, 4, 8}) {
        specs.push_back(samplers::SamplerSpec::meanflow_multistep(k));
    }
    for (int k : {1, 2, 4, 8, 16}) {
        specs.push_back(samplers::SamplerSpec::euler_reflow(k));
    }
    specs.push_back(samplers::SamplerSpec::hybridflow(0.15));
    for (samplers::SamplerSpec& spec : specs) {
        spec.displacement_scaling = displacement_scaling;
        spec.fresh_noise_renoise = fresh_noise;
    }
    return specs;
}

namespace {

struct SpecEval {
    double energy = 0.0;
    double mmd = 0.0;
    std::uint64_t nfe = 0;
};

SpecEval evaluate_one(const net::NetworkParams& params, const tasks::TaskSpec& task,
                      const samplers::SamplerSpec& spec, const tasks::ConditionedBatch& reference,
                      std::uint64_t seed) {
    const std::size_t n = reference.x0.rows();
    RngState rng = RngState(seed).split(kEvalNoiseBase + fnv1a(spec.label()));
    RealArray z1 = gauss(rng, n, task.dim);
    net::EvalCounter counter;
    samplers::SampleResult result =
        samplers::run_sampler(samplers::network_field(params, &counter), z1, reference.c, spec, &rng);

    // Joint [x | c] comparison so condition/sample mismatches register.
    const RealArray gen_joint = concat_cols({&result.x, &reference.c});
    const RealArray ref_joint = concat_cols({&reference.x0, &reference.c});
    SpecEval eval;
    eval.energy = metrics::energy_distance(gen_joint, ref_joint);
    eval.mmd = metrics::mmd_rbf(gen_joint, ref_joint,
                                metrics::median_heuristic_bandwidth(gen_joint, ref_joint));
    eval.nfe = result.trace.nfe;
    return eval;
}

}  // namespace

metrics::MetricReport evaluate(const net::NetworkParams& params, const tasks::TaskSpec& task,
                               const std::vector<samplers::SamplerSpec>& specs, std::size_t n,
                               std::uint64_t seed, bool with_timing) {
    if (params.arch.input_dim != task.dim || params.arch.cond_dim != task.cond_dim) {
        throw ValidationError("evaluate: checkpoint dimensions do not match the task");
    }
    if (n < 2) {
        throw DomainError("evaluate: need n >= 2");
    }
    RngState ref_rng = RngState(seed).split(kEvalReference);
    const tasks::ConditionedBatch reference = tasks::draw(task, ref_rng, n);

    metrics::MetricReport report;
    for (const samplers::SamplerSpec& spec : specs) {
        spec.validate();
        const SpecEval eval = evaluate_one(params, task, spec, reference, seed);
        metrics::MetricEntry base{"", 0.0, task.name(), spec.label(), spec.steps,
                                  spec.mode == samplers::SamplerMode::hybridflow ? spec.alpha : 0.0,
                                  seed, n};
        metrics::MetricEntry e = base;
        e.metric = "energy_distance";
        e.value = eval.energy;
        report.add(e);
        e = base;
        e.metric = "mmd_rbf";
        e.value = eval.mmd;
        report.add(e);
        e = base;
        e.metric = "nfe";
        e.value = static_cast<double>(eval.nfe);
        report.add(e);
        if (with_timing) {
            e = base;
            e.metric = "wall_ms_per_sample";
            e.value = bench_sampler_ms(params, task, spec);
            report.add(e);
        }
    }
    return report;
}

AlphaSweepResult sweep_alpha(const net::NetworkParams& params, const tasks::TaskSpec& task,
                             const std::vector<double>& grid, std::size_t n, std::uint64_t seed,
                             const std::optional<std::filesystem::path>& out_dir,
                             const ExperimentConfig& provenance, bool displacement_scaling,
                             bool fresh_noise) {
    if (grid.empty()) {
        throw ValidationError("sweep_alpha: empty grid");
    }
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        if (!(grid[i] < grid[i + 1])) {
            throw ValidationError("sweep_alpha: grid must be strictly increasing");
        }
    }
    RngState ref_rng = RngState(seed).split(kEvalReference);
    const tasks::ConditionedBatch reference = tasks::draw(task, ref_rng, n);

    AlphaSweepResult result;
    for (double alpha : grid) {
        samplers::SamplerSpec spec = samplers::SamplerSpec::hybridflow(alpha);
        spec.displacement_scaling = displacement_scaling;
        spec.fresh_noise_renoise = fresh_noise;
        const SpecEval eval = evaluate_one(params, task, spec, reference, seed);
        result.points.push_back({alpha, spec, eval.energy, eval.mmd, eval.nfe});
    }
    if (grid.size() > 1) {
        result.argmin = 0;
        for (std::size_t i = 1; i < result.points.size(); ++i) {
            if (result.points[i].energy_distance <
                result.points[static_cast<std::size_t>(result.argmin)].energy_distance) {
                result.argmin = static_cast<int>(i);
            }
        }
    }

    if (out_dir) {
        std::ofstream csv(*out_dir / "alpha_sweep.csv");
        if (!csv) {
            throw IoError("cannot open alpha_sweep.csv");
        }
        csv << "# hybridflow-alpha-sweep schema=1 " << provenance_comment(provenance) << "\n";
        if (result.argmin >= 0) {
            csv << "# argmin alpha="
                << fmt_double(result.points[static_cast<std::size_t>(result.argmin)].x) << "\n";
        }
        csv << "alpha,energy_distance,mmd_rbf,nfe\n";
        for (const SweepPoint& p : result.points) {
            csv << fmt_double(p.x) << "," << fmt_double(p.energy_distance) << ","
                << fmt_double(p.mmd) << "," << p.nfe << "\n";
        }
        svg::Series series;
        series.label = "hybridflow (2 NFE)";
        for (const SweepPoint& p : result.points) {
            series.xs.push_back(p.x);
            series.ys.push_back(p.energy_distance);
        }
        series.marker = result.argmin;
        svg::write_line_chart(*out_dir / "alpha_sweep.svg", "Quality vs renoise ratio",
                              "alpha (= t_refine)", "energy distance", {series});
    }
    return result;
}

NfeSweepResult sweep_nfe(const net::NetworkParams& params, const tasks::TaskSpec& task,
                         std::size_t n, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& out_dir,
                         const ExperimentConfig& provenance, bool displacement_scaling,
                         bool fresh_noise) {
    NfeSweepResult result;
    for (const samplers::SamplerSpec& spec : default_sampler_set(displacement_scaling, fresh_noise)) {
        RngState ref_rng = RngState(seed).split(kEvalReference);
        const tasks::ConditionedBatch reference = tasks::draw(task, ref_rng, n);
        const SpecEval eval = evaluate_one(params, task, spec, reference, seed);
        result.points.push_back(
            {static_cast<double>(spec.analytic_nfe()), spec, eval.energy, eval.mmd, eval.nfe});
    }

    if (out_dir) {
        std::ofstream csv(*out_dir / "nfe_sweep.csv");
        if (!csv) {
            throw IoError("cannot open nfe_sweep.csv");
        }
        csv << "# hybridflow-nfe-sweep schema=1 " << provenance_comment(provenance) << "\n";
        csv << "sampler,K,nfe,energy_distance,mmd_rbf\n";
        for (const SweepPoint& p : result.points) {
            csv << p.spec.label() << "," << p.spec.steps << "," << p.nfe << ","
                << fmt_double(p.energy_distance) << "," << fmt_double(p.mmd) << "\n";
        }
        std::vector<svg::Series> series(3);
        series[0].label = "euler_reflow";
        series[1].label = "meanflow_multistep";
        series[2].label = "hybridflow (2 NFE)";
        for (const SweepPoint& p : result.points) {
            std::size_t idx = 2;
            if (p.spec.mode == samplers::SamplerMode::euler_reflow) {
                idx = 0;
            } else if (p.spec.mode == samplers::SamplerMode::meanflow_multistep ||
                       p.spec.mode == samplers::SamplerMode::meanflow_1step) {
                idx = 1;
            }
            series[idx].xs.push_back(p.x);
            series[idx].ys.push_back(p.energy_distance);
        }
        svg::write_line_chart(*out_dir / "nfe_sweep.svg", "Quality vs network evaluations", "NFE",
                              "energy distance", series);
    }
    return result;
}

double bench_sampler_ms(const net::NetworkParams& params, const tasks::TaskSpec& task,
                        const samplers::SamplerSpec& spec, std::size_t reps) {
    RngState rng(123);
    tasks::ConditionedBatch one = tasks::draw(task, rng, 1);
    RealArray z1 = gauss(rng, 1, task.dim);
    const samplers::VelocityField field = samplers::network_field(params, nullptr);
    // Warm up once outside the timed region.
    samplers::run_sampler(field, z1, one.c, spec, &rng);
    std::vector<double> times;
    times.reserve(reps);
    for (std::size_t i = 0; i < reps; ++i) {
        const double start = now_ms();
        samplers::run_sampler(field, z1, one.c, spec, &rng);
        times.push_back(now_ms() - start);
    }
    return median_of(std::move(times));
}

void demo(const DemoOptions& options) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) {
        throw IoError("cannot create demo directory: " + ec.message());
    }

    // Closed-form oracle gate first; a broken oracle invalidates everything
    // downstream.
    {
        std::ofstream report(options.out_dir / "oracle_report.txt");
        if (!report) {
            throw IoError("cannot open oracle_report.txt");
        }
        if (!oracle_check(report)) {
            throw Error("oracle checks failed; see oracle_report.txt");
        }
    }

    ExperimentConfig config = ExperimentConfig::default_gmm();
    config.seed = options.seed;
    config.out_dir = (options.out_dir / "run").string();
    config.save(options.out_dir / "config.json");
    TrainResult trained = train(config);

    const std::size_t eval_n = 4096;
    metrics::MetricReport report =
        evaluate(trained.params, config.task,
                 default_sampler_set(options.displacement_scaling, options.fresh_noise_renoise),
                 eval_n, options.seed, true);
    report.write_csv(options.out_dir / "results.csv", provenance_comment(config));

    sweep_alpha(trained.params, config.task, kDefaultAlphaGrid, eval_n, options.seed,
                options.out_dir, config, options.displacement_scaling,
                options.fresh_noise_renoise);
    sweep_nfe(trained.params, config.task, eval_n, options.seed, options.out_dir, config,
              options.displacement_scaling, options.fresh_noise_renoise);

    // Small staged trace for inspection.
    RngState trace_rng = RngState(options.seed).split(99);
    tasks::ConditionedBatch trace_ref = tasks::draw(config.task, trace_rng, 64);
    RealArray z1 = gauss(trace_rng, 64, config.task.dim);
    samplers::SamplerSpec hybrid = samplers::SamplerSpec::hybridflow(0.15);
    hybrid.displacement_scaling = options.displacement_scaling;
    hybrid.fresh_noise_renoise = options.fresh_noise_renoise;
    samplers::SampleResult traced =
        samplers::run_sampler(trained.params, z1, trace_ref.c, hybrid, &trace_rng);
    samplers::dump_samples(options.out_dir / "hybrid_trace.csv", traced, hybrid, options.seed,
                           provenance_comment(config));
}

}  // namespace hf::harness
