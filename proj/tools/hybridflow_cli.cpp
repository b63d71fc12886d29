// Command-line driver: training, evaluation, sweeps, the oracle gate, and the
// end-to-end demo pipeline.
//
// Exit codes: 0 success, 1 validation/usage error, 2 oracle or numerical
// failure, 3 I/O error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hf/harness.hpp"

namespace {

using namespace hf;

std::vector<samplers::SamplerSpec> parse_sampler_list(const std::string& text,
                                                      bool displacement_scaling,
                                                      bool fresh_noise) {
    // Comma-separated tokens: meanflow_1step, euler_reflow@K,
    // meanflow_multistep@K, hybridflow@alpha.
    std::vector<samplers::SamplerSpec> specs;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) {
            continue;
        }
        std::string head = token, arg;
        if (const auto at = token.find('@'); at != std::string::npos) {
            head = token.substr(0, at);
            arg = token.substr(at + 1);
        }
        samplers::SamplerSpec spec;
        switch (samplers::sampler_mode_from_name(head)) {
            case samplers::SamplerMode::meanflow_1step:
                spec = samplers::SamplerSpec::meanflow_1step();
                break;
            case samplers::SamplerMode::euler_reflow:
                spec = samplers::SamplerSpec::euler_reflow(arg.empty() ? 16 : std::stoi(arg));
                break;
            case samplers::SamplerMode::meanflow_multistep:
                spec = samplers::SamplerSpec::meanflow_multistep(arg.empty() ? 4 : std::stoi(arg));
                break;
            case samplers::SamplerMode::hybridflow:
                spec = samplers::SamplerSpec::hybridflow(arg.empty() ? 0.15 : std::stod(arg));
                break;
        }
        spec.displacement_scaling = displacement_scaling;
        spec.fresh_noise_renoise = fresh_noise;
        specs.push_back(spec);
    }
    if (specs.empty()) {
        throw ValidationError("no samplers given");
    }
    return specs;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) {
            grid.push_back(std::stod(token));
        }
    }
    return grid;
}

int run(int argc, char** argv) {
    CLI::App app{"Few-step flow sampling experiments (train / evaluate / sweeps / demo)"};
    app.require_subcommand(1);

    bool literal_eq12 = false;
    bool fresh_renoise = false;
    app.add_flag("--literal-eq12", literal_eq12,
                 "use unscaled interval updates in samplers (no (t-r) step factor)");
    app.add_flag("--fresh-renoise", fresh_renoise,
                 "renoise with fresh noise instead of reusing the jump noise");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    train_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("--seed", seed_override, "override config seed");
    train_cmd->add_option("--out", out_override, "override config output directory");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score samplers against a task");
    std::string ckpt_path, task_name = "cond_gmm2d";
    std::string sampler_list =
        "meanflow_1step,meanflow_multistep@2,meanflow_multistep@4,meanflow_multistep@8,"
        "euler_reflow@1,euler_reflow@2,euler_reflow@4,euler_reflow@8,euler_reflow@16,"
        "hybridflow@0.15";
    std::size_t eval_n = 4096;
    std::uint64_t eval_seed = 0;
    std::string eval_out = "results.csv";
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint JSON")->required();
    eval_cmd->add_option("--task", task_name, "task name");
    eval_cmd->add_option("--samplers", sampler_list, "comma-separated sampler tokens");
    eval_cmd->add_option("--n", eval_n, "samples per sampler");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
    eval_cmd->add_option("--out", eval_out, "output CSV path");

    // sweep-alpha
    auto* alpha_cmd = app.add_subcommand("sweep-alpha", "hybrid quality across renoise ratios");
    std::string alpha_ckpt, alpha_task = "cond_gmm2d", alpha_grid_text;
    std::uint64_t alpha_seed = 0;
    std::size_t alpha_n = 4096;
    std::string alpha_out = "out/sweep_alpha";
    alpha_cmd->add_option("--ckpt", alpha_ckpt, "checkpoint JSON")->required();
    alpha_cmd->add_option("--task", alpha_task, "task name");
    alpha_cmd->add_option("--grid", alpha_grid_text, "comma-separated alpha grid");
    alpha_cmd->add_option("--n", alpha_n, "samples per grid point");
    alpha_cmd->add_option("--seed", alpha_seed, "evaluation seed");
    alpha_cmd->add_option("--out", alpha_out, "output directory");

    // sweep-nfe
    auto* nfe_cmd = app.add_subcommand("sweep-nfe", "quality across step counts");
    std::string nfe_ckpt, nfe_task = "cond_gmm2d";
    std::uint64_t nfe_seed = 0;
    std::size_t nfe_n = 4096;
    std::string nfe_out = "out/sweep_nfe";
    nfe_cmd->add_option("--ckpt", nfe_ckpt, "checkpoint JSON")->required();
    nfe_cmd->add_option("--task", nfe_task, "task name");
    nfe_cmd->add_option("--n", nfe_n, "samples per sampler");
    nfe_cmd->add_option("--seed", nfe_seed, "evaluation seed");
    nfe_cmd->add_option("--out", nfe_out, "output directory");

    // oracle-check
    auto* oracle_cmd = app.add_subcommand("oracle-check", "validate closed forms and autodiff");

    // demo
    auto* demo_cmd = app.add_subcommand("demo", "oracle gate + train + evaluate + sweeps");
    std::uint64_t demo_seed = 0;
    std::string demo_out = "out/demo";
    demo_cmd->add_option("--seed", demo_seed, "pipeline seed");
    demo_cmd->add_option("--out", demo_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (train_cmd->parsed()) {
        harness::ExperimentConfig config = harness::ExperimentConfig::load(config_path);
        if (seed_override) {
            config.seed = *seed_override;
        }
        if (out_override) {
            config.out_dir = *out_override;
        }
        const harness::TrainResult result = harness::train(config);
        std::cout << "checkpoint: " << result.checkpoint_path.string() << "\n"
                  << "train log:  " << result.log_path.string() << "\n"
                  << "val loss (reflow mode):   " << fmt_double(result.final_val_reflow) << "\n"
                  << "val loss (meanflow mode): " << fmt_double(result.final_val_meanflow) << "\n";
        return 0;
    }
    if (eval_cmd->parsed()) {
        const net::Checkpoint ckpt = net::load_checkpoint(ckpt_path);
        const tasks::TaskSpec task = tasks::TaskSpec::by_name(task_name);
        const auto specs = parse_sampler_list(sampler_list, !literal_eq12, fresh_renoise);
        harness::ExperimentConfig prov = harness::ExperimentConfig::default_gmm();
        prov.task = task;
        prov.seed = eval_seed;
        const metrics::MetricReport report =
            harness::evaluate(ckpt.params, task, specs, eval_n, eval_seed, true);
        report.write_csv(eval_out, harness::provenance_comment(prov));
        std::cout << "wrote " << eval_out << " (" << report.entries.size() << " rows)\n";
        return 0;
    }
    if (alpha_cmd->parsed()) {
        const net::Checkpoint ckpt = net::load_checkpoint(alpha_ckpt);
        const tasks::TaskSpec task = tasks::TaskSpec::by_name(alpha_task);
        const std::vector<double> grid =
            alpha_grid_text.empty() ? harness::kDefaultAlphaGrid : parse_grid(alpha_grid_text);
        std::filesystem::create_directories(alpha_out);
        harness::ExperimentConfig prov = harness::ExperimentConfig::default_gmm();
        prov.task = task;
        prov.seed = alpha_seed;
        const harness::AlphaSweepResult sweep =
            harness::sweep_alpha(ckpt.params, task, grid, alpha_n, alpha_seed,
                                 std::filesystem::path(alpha_out), prov, !literal_eq12,
                                 fresh_renoise);
        if (sweep.argmin >= 0) {
            std::cout << "argmin alpha = "
                      << fmt_double(sweep.points[static_cast<std::size_t>(sweep.argmin)].x) << "\n";
        }
        std::cout << "wrote " << alpha_out << "/alpha_sweep.{csv,svg}\n";
        return 0;
    }
    if (nfe_cmd->parsed()) {
        const net::Checkpoint ckpt = net::load_checkpoint(nfe_ckpt);
        const tasks::TaskSpec task = tasks::TaskSpec::by_name(nfe_task);
        std::filesystem::create_directories(nfe_out);
        harness::ExperimentConfig prov = harness::ExperimentConfig::default_gmm();
        prov.task = task;
        prov.seed = nfe_seed;
        harness::sweep_nfe(ckpt.params, task, nfe_n, nfe_seed, std::filesystem::path(nfe_out),
                           prov, !literal_eq12, fresh_renoise);
        std::cout << "wrote " << nfe_out << "/nfe_sweep.{csv,svg}\n";
        return 0;
    }
    if (oracle_cmd->parsed()) {
        return harness::oracle_check(std::cout) ? 0 : 2;
    }
    if (demo_cmd->parsed()) {
        harness::DemoOptions options;
        options.seed = demo_seed;
        options.out_dir = demo_out;
        options.displacement_scaling = !literal_eq12;
        options.fresh_noise_renoise = fresh_renoise;
        harness::demo(options);
        std::cout << "demo outputs in " << demo_out << "\n";
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const hf::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const hf::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const hf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.what() == std::string("oracle checks failed; see oracle_report.txt") ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
