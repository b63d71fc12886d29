#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hf/flowcore.hpp"
#include "hf/metrics.hpp"
#include "hf/samplers.hpp"
#include "hf/tasks.hpp"

using namespace hf;
using namespace hf::metrics;

namespace {

flowcore::PathBatch mode_batch(const tasks::TaskSpec& task, bool degenerate, RngState& rng,
                               std::size_t n) {
    tasks::ConditionedBatch data = tasks::draw(task, rng, n);
    RealArray z1 = gauss(rng, n, task.dim);
    RealArray r(n, 1), t(n, 1);
    flowcore::TimeSamplingConfig cfg;
    cfg.p_degenerate = degenerate ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const flowcore::TimePair pair = flowcore::sample_time_pair(rng, cfg);
        r(i, 0) = pair.r;
        t(i, 0) = pair.t;
    }
    return flowcore::assemble_path_batch(data.x0, z1, data.c, r, t);
}

// Largest singular value via power iteration on A^T A (test-only oracle).
double operator_norm(const RealArray& a) {
    RealArray v(a.cols(), 1, 1.0);
    for (int it = 0; it < 200; ++it) {
        RealArray av = matmul(a, v);
        RealArray atav = matmul_tn(a, av);
        double norm = 0.0;
        for (std::size_t i = 0; i < atav.size(); ++i) {
            norm += atav.data()[i] * atav.data()[i];
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < atav.size(); ++i) {
            atav.data()[i] /= norm;
        }
        v = std::move(atav);
    }
    RealArray av = matmul(a, v);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        num += av.data()[i] * av.data()[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        den += v.data()[i] * v.data()[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("energy distance: identical samples give exactly zero") {
    RngState rng(1);
    const RealArray a = gauss(rng, 100, 3);
    CHECK(energy_distance(a, a) == 0.0);
}

TEST_CASE("energy distance: hand case with duplicated point masses") {
    const RealArray a = RealArray::from_rows({{0.0}, {0.0}});
    const RealArray b = RealArray::from_rows({{1.0}, {1.0}});
    CHECK(energy_distance(a, b) == 2.0);
    CHECK_THROWS_AS(energy_distance(RealArray(1, 1, 0.0), b), DomainError);
}

TEST_CASE("energy distance: symmetry is exact") {
    RngState rng(2);
    const RealArray a = gauss(rng, 64, 2);
    const RealArray b = gauss(rng, 80, 2);
    CHECK(energy_distance(a, b) == energy_distance(b, a));
}

TEST_CASE("energy distance separates shifted normals across 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngState rng(seed);
        RealArray a = gauss(rng, 1000, 1);
        RealArray b = gauss(rng, 1000, 1);
        RealArray shifted = gauss(rng, 1000, 1);
        for (std::size_t i = 0; i < shifted.size(); ++i) {
            shifted.data()[i] += 3.0;
        }
        CHECK(energy_distance(a, shifted) > energy_distance(a, b));
    }
}

TEST_CASE("mmd: identical samples vanish, flat kernel vanishes") {
    RngState rng(3);
    const RealArray a = gauss(rng, 128, 2);
    CHECK(std::abs(mmd_rbf(a, a, 1.0)) <= 1e-12);

    const RealArray b = gauss(rng, 128, 2);
    CHECK(std::abs(mmd_rbf(a, b, 1e9)) <= 1e-12);
    CHECK_THROWS_AS(mmd_rbf(a, b, 0.0), DomainError);
}

TEST_CASE("mmd with median-heuristic bandwidth separates shifted normals") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngState rng(100 + seed);
        RealArray a = gauss(rng, 500, 1);
        RealArray b = gauss(rng, 500, 1);
        RealArray shifted = gauss(rng, 500, 1);
        for (std::size_t i = 0; i < shifted.size(); ++i) {
            shifted.data()[i] += 1.0;
        }
        const double h = median_heuristic_bandwidth(a, shifted);
        CHECK(mmd_rbf(a, shifted, h) > mmd_rbf(a, b, h));
    }
}

TEST_CASE("validation loss checks mode-appropriate time pairs") {
    const tasks::TaskSpec task = tasks::TaskSpec::cond_gmm2d();
    net::NetworkArch arch;
    arch.input_dim = 2;
    arch.cond_dim = 4;
    arch.hidden = {8};
    RngState rng(4);
    const net::NetworkParams params = net::init_params(arch, rng);
    const flowcore::PathBatch degenerate = mode_batch(task, true, rng, 16);
    const flowcore::PathBatch strict = mode_batch(task, false, rng, 16);

    CHECK_NOTHROW(validation_loss(params, degenerate, ValMode::reflow));
    CHECK_NOTHROW(validation_loss(params, strict, ValMode::meanflow));
    CHECK_THROWS_AS(validation_loss(params, strict, ValMode::reflow), DomainError);
    CHECK_THROWS_AS(validation_loss(params, degenerate, ValMode::meanflow), DomainError);
}

TEST_CASE("zero network validation loss matches the target moment") {
    tasks::TaskSpec task = tasks::TaskSpec::cond_gauss(2, 2, 1.0, 0.0);
    for (std::size_t j = 0; j < task.dim; ++j) {
        task.gauss_mean_base(0, j) = 0.0;
    }
    net::NetworkArch arch;
    arch.input_dim = 2;
    arch.cond_dim = 2;
    arch.hidden = {8};
    RngState rng(5);
    net::NetworkParams params = net::init_params(arch, rng);
    for (auto& w : params.weights) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            w.data()[i] = 0.0;
        }
    }
    const flowcore::PathBatch batch = mode_batch(task, true, rng, 4096);
    const double loss = validation_loss(params, batch, ValMode::reflow);
    CHECK(std::abs(loss - 2.0) <= 0.15);  // Var(x0) + Var(z1) per dimension
}

TEST_CASE("lipschitz estimate: zero network gives zero") {
    net::NetworkArch arch;
    arch.input_dim = 2;
    arch.cond_dim = 4;
    arch.hidden = {8};
    RngState rng(6);
    net::NetworkParams params = net::init_params(arch, rng);
    for (auto& w : params.weights) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            w.data()[i] = 0.0;
        }
    }
    const RealArray probes = gauss(rng, 16, 2);
    const RealArray c(16, 4, 0.0);
    CHECK(lipschitz_estimate(params, probes, 0.5, c, rng) == 0.0);
}

TEST_CASE("lipschitz estimate brackets the operator norm of a linear network") {
    const std::size_t d = 4;
    net::NetworkArch arch;
    arch.input_dim = d;
    arch.cond_dim = 1;
    arch.hidden = {d};
    arch.activation = net::Activation::identity;
    arch.time_embed_dim = 1;
    RngState rng(7);
    net::NetworkParams params = net::init_params(arch, rng);
    for (std::size_t i = 0; i < params.weights[0].size(); ++i) {
        params.weights[0].data()[i] = 0.0;
    }
    for (std::size_t j = 0; j < d; ++j) {
        params.weights[0](j, j) = 1.0;  // pass z through, ignore r/t/c features
    }
    const RealArray a_matrix = gauss(rng, d, d);
    params.weights[1] = a_matrix;
    for (auto& b : params.biases) {
        for (std::size_t i = 0; i < b.size(); ++i) {
            b.data()[i] = 0.0;
        }
    }

    const double norm = operator_norm(a_matrix);
    const RealArray probes = gauss(rng, 4, d);
    const RealArray c(4, 1, 0.0);
    const double lhat = lipschitz_estimate(params, probes, 0.5, c, rng, 1e-3, 256);
    CHECK(lhat <= norm * (1.0 + 1e-6));
    CHECK(lhat >= 0.9 * norm);
}

TEST_CASE("gaussian moment KL is nonnegative and zero only at matching moments") {
    const RealArray mean_p = RealArray::from_rows({{0.3, -0.2}});
    const RealArray var_p = RealArray::from_rows({{0.8, 1.2}});
    const RealArray mean_q = RealArray::from_rows({{0.0, 0.0}});
    CHECK(gaussian_moment_kl(mean_p, var_p, mean_q, 1.0) > 0.0);
    const RealArray var_match(1, 2, 0.7);
    const RealArray mean_match = mean_p;
    CHECK(gaussian_moment_kl(mean_p, var_match, mean_match, 0.7) == doctest::Approx(0.0));
}

TEST_CASE("shift audit: noise input and oracle euler transport stay near zero") {
    const tasks::TaskSpec task = tasks::TaskSpec::cond_gauss(2, 2, 0.5, 0.0);
    const RealArray c_row(1, 2, 0.0);
    const tasks::GaussianOracle oracle = tasks::make_gaussian_oracle(task, c_row);
    const samplers::VelocityField field = [&](const RealArray& z, double r, double t,
                                              const RealArray&) {
        return tasks::oracle_average_velocity(oracle, z, r, t);
    };
    RngState rng(8);
    const auto shifts =
        shift_audit(field, samplers::SamplerSpec::euler_reflow(64), oracle, c_row, 10000, rng);
    REQUIRE(shifts.size() == 65);
    CHECK(shifts.front().label == "noise");
    for (const ShiftEstimate& s : shifts) {
        CHECK(s.kl <= 0.01);
    }
}

TEST_CASE("error audit: oracle field leaves no deviation") {
    const tasks::TaskSpec task = tasks::TaskSpec::cond_gauss(2, 2, 0.5, 0.0);
    const RealArray c_row(1, 2, 0.0);
    const tasks::GaussianOracle oracle = tasks::make_gaussian_oracle(task, c_row);
    const samplers::VelocityField field = [&](const RealArray& z, double r, double t,
                                              const RealArray&) {
        return tasks::oracle_average_velocity(oracle, z, r, t);
    };
    RngState rng(9);
    const ErrorAudit audit = error_accumulation_audit(field, oracle, c_row, 8, 256, rng);
    REQUIRE(audit.rows.size() == 8);
    for (const ErrorAuditRow& row : audit.rows) {
        CHECK(row.mean_step_error <= 1e-6);
        CHECK(row.mean_deviation <= 1e-5);
    }
    CHECK(audit.trajectories_within_bound == 1.0);
}

TEST_CASE("error audit: K=1 deviation equals the one-step error") {
    const tasks::TaskSpec task = tasks::TaskSpec::cond_gauss(2, 2, 0.5, 0.0);
    const RealArray c_row(1, 2, 0.0);
    const tasks::GaussianOracle oracle = tasks::make_gaussian_oracle(task, c_row);
    RngState net_rng(10);
    net::NetworkArch arch;
    arch.input_dim = 2;
    arch.cond_dim = 2;
    arch.hidden = {16};
    const net::NetworkParams params = net::init_params(arch, net_rng);
    const samplers::VelocityField field = samplers::network_field(params, nullptr);
    RngState rng(11);
    const ErrorAudit audit = error_accumulation_audit(field, oracle, c_row, 1, 128, rng);
    REQUIRE(audit.rows.size() == 1);
    CHECK(audit.rows[0].mean_deviation ==
          doctest::Approx(audit.rows[0].mean_step_error).epsilon(1e-12));
    CHECK(audit.trajectories_within_bound == 1.0);
}

TEST_CASE("error audit: recursion bound holds for an arbitrary network field") {
    const tasks::TaskSpec task = tasks::TaskSpec::cond_gauss(2, 2, 0.5, 0.0);
    const RealArray c_row(1, 2, 0.0);
    const tasks::GaussianOracle oracle = tasks::make_gaussian_oracle(task, c_row);
    RngState net_rng(12);
    net::NetworkArch arch;
    arch.input_dim = 2;
    arch.cond_dim = 2;
    arch.hidden = {24, 24};
    const net::NetworkParams params = net::init_params(arch, net_rng);
    RngState rng(13);
    const ErrorAudit audit = error_accumulation_audit(samplers::network_field(params, nullptr),
                                                      oracle, c_row, 8, 512, rng);
    CHECK(audit.trajectories_within_bound >= 0.95);
}

TEST_CASE("metric report rejects non-finite values and writes csv") {
    MetricReport report;
    CHECK_THROWS_AS(
        report.add({"bad", std::nan(""), "task", "sampler", 1, 0.0, 0, 10}),
        NumericError);
    report.add({"energy_distance", 0.5, "cond_gmm2d", "hybridflow@0.15", 1, 0.15, 0, 128});
    const auto path = std::filesystem::temp_directory_path() / "hf_metrics_test.csv";
    report.write_csv(path, "seed=0");
    CHECK(report.find("energy_distance", "hybridflow@0.15") != nullptr);
    CHECK(report.find("nope", "x") == nullptr);
    std::filesystem::remove(path);
}
