#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hf/harness.hpp"

using namespace hf;
using namespace hf::harness;

namespace {

ExperimentConfig tiny_config(const std::filesystem::path& out_dir) {
    ExperimentConfig cfg = ExperimentConfig::default_gauss();
    cfg.arch.hidden = {16, 16};
    cfg.train_steps = 60;
    cfg.batch_size = 32;
    cfg.eval_every = 30;
    cfg.val_size = 64;
    cfg.seed = 5;
    cfg.out_dir = out_dir.string();
    return cfg;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config round-trips through its file form losslessly") {
    const ExperimentConfig cfg = ExperimentConfig::default_gmm();
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back == cfg);
    CHECK(config_hash(back) == config_hash(cfg));

    const ExperimentConfig gauss = ExperimentConfig::default_gauss();
    CHECK(ExperimentConfig::from_json(gauss.to_json()) == gauss);
    CHECK(config_hash(gauss) != config_hash(cfg));
}

TEST_CASE("config validation rejects inconsistent dimensions") {
    ExperimentConfig cfg = ExperimentConfig::default_gmm();
    cfg.arch.input_dim = 5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = ExperimentConfig::default_gmm();
    cfg.lr_schedule = "exotic";
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("train with zero steps writes the initialization checkpoint") {
    TempDir dir("hf_train0");
    ExperimentConfig cfg = tiny_config(dir.path);
    cfg.train_steps = 0;
    const TrainResult result = train(cfg);

    RngState init_rng = RngState(cfg.seed).split(1);
    const net::NetworkParams expect = net::init_params(cfg.arch, init_rng);
    const net::Checkpoint ckpt = net::load_checkpoint(result.checkpoint_path);
    for (std::size_t l = 0; l < expect.layer_count(); ++l) {
        CHECK(ckpt.params.weights[l] == expect.weights[l]);
        CHECK(ckpt.params.biases[l] == expect.biases[l]);
    }
}

TEST_CASE("two identical tiny trainings produce bit-identical checkpoints") {
    TempDir dir_a("hf_train_a");
    TempDir dir_b("hf_train_b");
    ExperimentConfig cfg_a = tiny_config(dir_a.path);
    ExperimentConfig cfg_b = tiny_config(dir_b.path);
    const TrainResult ra = train(cfg_a);
    const TrainResult rb = train(cfg_b);
    for (std::size_t l = 0; l < ra.params.layer_count(); ++l) {
        CHECK(ra.params.weights[l] == rb.params.weights[l]);
        CHECK(ra.params.biases[l] == rb.params.biases[l]);
    }
    CHECK(ra.final_val_reflow == rb.final_val_reflow);
    CHECK(ra.final_val_meanflow == rb.final_val_meanflow);
}

TEST_CASE("train log carries provenance header and the expected columns") {
    TempDir dir("hf_trainlog");
    const ExperimentConfig cfg = tiny_config(dir.path);
    const TrainResult result = train(cfg);
    const std::string log = read_file(result.log_path);
    CHECK(log.find("# config_hash=") == 0);
    CHECK(log.find("step,wall_ms,train_loss,val_loss_reflow_mode,val_loss_meanflow_mode,seed") !=
          std::string::npos);
}

TEST_CASE("evaluate is deterministic per (seed, spec) and reports analytic NFE") {
    TempDir dir("hf_eval");
    const ExperimentConfig cfg = tiny_config(dir.path);
    const TrainResult trained = train(cfg);

    const std::vector<samplers::SamplerSpec> specs = {
        samplers::SamplerSpec::meanflow_1step(),
        samplers::SamplerSpec::hybridflow(0.15),
        samplers::SamplerSpec::meanflow_1step(),  // duplicate spec: identical rows
    };
    const metrics::MetricReport report =
        evaluate(trained.params, cfg.task, specs, 256, 3, false);

    const auto* ed_first = report.find("energy_distance", "meanflow_1step");
    REQUIRE(ed_first != nullptr);
    std::size_t count = 0;
    double value = 0.0;
    for (const auto& e : report.entries) {
        if (e.metric == "energy_distance" && e.sampler == "meanflow_1step") {
            ++count;
            value = e.value;
        }
    }
    CHECK(count == 2);
    CHECK(value == ed_first->value);

    const auto* nfe = report.find("nfe", "hybridflow@0.15");
    REQUIRE(nfe != nullptr);
    CHECK(nfe->value == 2.0);

    // A second evaluation under the same seed reproduces the rows exactly.
    const metrics::MetricReport again =
        evaluate(trained.params, cfg.task, specs, 256, 3, false);
    REQUIRE(again.entries.size() == report.entries.size());
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        CHECK(report.entries[i].value == again.entries[i].value);
    }
}

TEST_CASE("alpha sweep: degenerate single-value grid claims no argmin") {
    TempDir dir("hf_sweep1");
    const ExperimentConfig cfg = tiny_config(dir.path);
    const TrainResult trained = train(cfg);
    const AlphaSweepResult sweep = sweep_alpha(trained.params, cfg.task, {0.15}, 128, 0,
                                               dir.path, cfg, true, false);
    CHECK(sweep.points.size() == 1);
    CHECK(sweep.argmin == -1);
    const std::string csv = read_file(dir.path / "alpha_sweep.csv");
    CHECK(csv.find("# argmin") == std::string::npos);
    CHECK(csv.find("config_hash=") != std::string::npos);

    CHECK_THROWS_AS(
        sweep_alpha(trained.params, cfg.task, {0.3, 0.2}, 128, 0, std::nullopt, cfg, true, false),
        ValidationError);
}

TEST_CASE("alpha sweep on a multi-point grid emits csv, svg, and an argmin") {
    TempDir dir("hf_sweep3");
    const ExperimentConfig cfg = tiny_config(dir.path);
    const TrainResult trained = train(cfg);
    const AlphaSweepResult sweep = sweep_alpha(trained.params, cfg.task, {0.1, 0.2, 0.3}, 128, 0,
                                               dir.path, cfg, true, false);
    CHECK(sweep.points.size() == 3);
    CHECK(sweep.argmin >= 0);
    CHECK(std::filesystem::exists(dir.path / "alpha_sweep.svg"));
    const std::string csv = read_file(dir.path / "alpha_sweep.csv");
    CHECK(csv.find("# argmin alpha=") != std::string::npos);
}

TEST_CASE("nfe sweep covers all sampler families with analytic NFE") {
    TempDir dir("hf_nfesweep");
    const ExperimentConfig cfg = tiny_config(dir.path);
    const TrainResult trained = train(cfg);
    const NfeSweepResult sweep =
        sweep_nfe(trained.params, cfg.task, 128, 0, dir.path, cfg, true, false);
    REQUIRE(sweep.points.size() == 10);
    for (const SweepPoint& p : sweep.points) {
        CHECK(p.nfe == p.spec.analytic_nfe());
    }
    // meanflow_1step row equals meanflow_multistep@1 row (same procedure).
    const SweepPoint* one = nullptr;
    const SweepPoint* multi1 = nullptr;
    for (const SweepPoint& p : sweep.points) {
        if (p.spec.label() == "meanflow_1step") one = &p;
        if (p.spec.label() == "meanflow_multistep@1") multi1 = &p;
    }
    REQUIRE(one != nullptr);
    REQUIRE(multi1 != nullptr);
    CHECK(one->energy_distance == multi1->energy_distance);
    CHECK(std::filesystem::exists(dir.path / "nfe_sweep.svg"));
}

TEST_CASE("oracle check passes clean and fails under the coefficient canary") {
    std::ostringstream clean;
    CHECK(oracle_check(clean));
    // Every check line carries a verdict, and at least 6 distinct families ran.
    CHECK(clean.str().find("oracle families") != std::string::npos);
    std::size_t families = 0;
    const std::string text = clean.str();
    const auto pos = text.find("across ");
    REQUIRE(pos != std::string::npos);
    families = std::stoul(text.substr(pos + 7));
    CHECK(families >= 6);

    std::ostringstream broken;
    OracleCheckOptions options;
    options.coefficient_perturbation = 1e-3;
    CHECK_FALSE(oracle_check(broken, options));
    CHECK(broken.str().find("[FAIL] closed_form_vs_richardson_euler4096") != std::string::npos);
}

TEST_CASE("bench_sampler_ms returns a positive per-sample time") {
    TempDir dir("hf_bench");
    ExperimentConfig cfg = tiny_config(dir.path);
    cfg.train_steps = 5;
    const TrainResult trained = train(cfg);
    const double ms =
        bench_sampler_ms(trained.params, cfg.task, samplers::SamplerSpec::meanflow_1step(), 50);
    CHECK(ms > 0.0);
}
