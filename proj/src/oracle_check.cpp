// Self-contained validations of every closed form and derivative path against
// an independent reference: finite differences for the autodiff, kernel-
// weighted Monte-Carlo conditional expectations and fine-grid integration for
// the Gaussian oracle, and moment identities for the samplers. The harness
// refuses to report experiment numbers unless all of these pass.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "hf/flowcore.hpp"
#include "hf/harness.hpp"
#include "hf/metrics.hpp"
#include "hf/net.hpp"
#include "hf/samplers.hpp"
#include "hf/tasks.hpp"

namespace hf::harness {

namespace {

struct CheckLine {
    std::string family;
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

class Checker {
  public:
    explicit Checker(std::ostream& out) : out_(out) {}

    void add(const std::string& family, const std::string& name, double value, double tolerance) {
        CheckLine line{family, name, value, tolerance, value <= tolerance};
        lines_.push_back(line);
        out_ << (line.pass ? "[ ok ] " : "[FAIL] ") << name << "  value=" << fmt_double(value)
             << "  tol=" << fmt_double(tolerance) << "\n";
    }

    bool summarize() {
        std::vector<std::string> families;
        std::size_t passed = 0;
        for (const CheckLine& line : lines_) {
            if (line.pass) {
                ++passed;
            }
            if (std::find(families.begin(), families.end(), line.family) == families.end()) {
                families.push_back(line.family);
            }
        }
        out_ << "oracle-check: " << passed << "/" << lines_.size() << " checks passed across "
             << families.size() << " oracle families\n";
        return passed == lines_.size();
    }

  private:
    std::ostream& out_;
    std::vector<CheckLine> lines_;
};

double rel_norm_err(const RealArray& got, const RealArray& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double d = got.data()[i] - want.data()[i];
        num += d * d;
        den += want.data()[i] * want.data()[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

net::NetworkArch random_small_arch(RngState& rng) {
    net::NetworkArch arch;
    arch.input_dim = 1 + rng.next_u64() % 4;
    arch.cond_dim = 1 + rng.next_u64() % 3;
    arch.hidden = {8 + rng.next_u64() % 9, 8 + rng.next_u64() % 9};
    arch.time_embed_dim = 2;
    const std::uint64_t pick = rng.next_u64() % 3;
    arch.activation = pick == 0   ? net::Activation::gelu
                      : pick == 1 ? net::Activation::softplus
                                  : net::Activation::tanh;
    return arch;
}

struct RandomEvalPoint {
    RealArray z, r, t, c;
};

RandomEvalPoint random_point(const net::NetworkArch& arch, RngState& rng, std::size_t batch) {
    RandomEvalPoint p;
    p.z = gauss(rng, batch, arch.input_dim);
    p.c = gauss(rng, batch, arch.cond_dim);
    p.r = RealArray(batch, 1);
    p.t = RealArray(batch, 1);
    for (std::size_t i = 0; i < batch; ++i) {
        // Interior times with a gap so finite-difference probes stay in domain.
        const double a = 0.1 + 0.75 * rng.next_unit();
        const double gap = 0.05 * rng.next_unit();
        p.r(i, 0) = a;
        p.t(i, 0) = std::min(0.98, a + 0.02 + gap);
    }
    return p;
}

// -- family: jvp_vs_fd --------------------------------------------------------

void check_jvp_fd(Checker& check, RngState& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const net::NetworkArch arch = random_small_arch(rng);
        RngState init = rng.split(1000 + static_cast<std::uint64_t>(trial));
        const net::NetworkParams params = net::init_params(arch, init);
        const std::size_t batch = 1 + rng.next_u64() % 3;
        RandomEvalPoint p = random_point(arch, rng, batch);
        net::InputTangent tangent;
        tangent.dz = gauss(rng, batch, arch.input_dim);
        tangent.dr = 2.0 * rng.next_unit() - 1.0;
        tangent.dt = 2.0 * rng.next_unit() - 1.0;

        const net::JvpResult jvp = net::forward_jvp(params, p.z, p.r, p.t, p.c, tangent);

        const double eps = 1e-5;
        auto shift = [&](double sign) {
            RealArray z = p.z, r = p.r, t = p.t;
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t j = 0; j < arch.input_dim; ++j) {
                    z(i, j) += sign * eps * tangent.dz(i, j);
                }
                r(i, 0) += sign * eps * tangent.dr;
                t(i, 0) += sign * eps * tangent.dt;
            }
            return net::forward(params, z, r, t, p.c).u;
        };
        const RealArray plus = shift(1.0), minus = shift(-1.0);
        RealArray fd = plus - minus;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            fd.data()[i] /= 2.0 * eps;
        }
        worst = std::max(worst, rel_norm_err(jvp.du, fd));
    }
    check.add("jvp_vs_fd", "jvp_vs_central_fd_100_cases", worst, 1e-5);
}

// -- family: grad_vs_fd -------------------------------------------------------

void check_grad_fd(Checker& check, RngState& rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const net::NetworkArch arch = random_small_arch(rng);
        RngState init = rng.split(2000 + static_cast<std::uint64_t>(trial));
        net::NetworkParams params = net::init_params(arch, init);
        const std::size_t batch = 2;
        RandomEvalPoint p = random_point(arch, rng, batch);
        const RealArray cotangent = gauss(rng, batch, arch.input_dim);

        const net::ForwardResult fr = net::forward(params, p.z, p.r, p.t, p.c);
        const net::ParamGrads grads = net::backward(params, fr.trace, cotangent);

        auto scalar_loss = [&]() {
            const RealArray u = net::forward(params, p.z, p.r, p.t, p.c).u;
            double s = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                s += u.data()[i] * cotangent.data()[i];
            }
            return s;
        };
        // 5 random coordinates per trial -> 100 total.
        for (int probe = 0; probe < 5; ++probe) {
            const std::size_t layer = rng.next_u64() % params.layer_count();
            const bool is_bias = rng.next_u64() % 4 == 0;
            RealArray& theta = is_bias ? params.biases[layer] : params.weights[layer];
            const RealArray& g = is_bias ? grads.biases[layer] : grads.weights[layer];
            const std::size_t idx = rng.next_u64() % theta.size();
            const double eps = 1e-5;
            const double saved = theta.data()[idx];
            theta.data()[idx] = saved + eps;
            const double up = scalar_loss();
            theta.data()[idx] = saved - eps;
            const double down = scalar_loss();
            theta.data()[idx] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double analytic = g.data()[idx];
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(fd - analytic) / denom);
        }
    }
    check.add("grad_vs_fd", "param_grad_vs_central_fd_100_coords", worst, 1e-5);
}

// -- family: mc_conditional_velocity -------------------------------------------

// Kernel-weighted conditional expectation of v = z1 - x0 given z_t. The true
// field is affine in z, so the weighted mean of v equals the closed form at
// the weighted mean of z_t exactly; the comparison is pure sampling error.
struct McEstimate {
    double v_hat = 0.0;
    double z_bar = 0.0;
    double se = 0.0;
};

McEstimate mc_conditional_velocity(double mu, double sigma, double t, double z_query,
                                   std::size_t draws, RngState& rng) {
    const double om = 1.0 - t;
    const double s_t = std::sqrt(om * om * sigma * sigma + t * t);
    const double h = 0.05 * s_t;
    double wsum = 0.0, wv = 0.0, wz = 0.0;
    std::vector<double> vs, ws;
    vs.reserve(draws);
    ws.reserve(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        const double x0 = mu + sigma * rng.next_gauss();
        const double z1 = rng.next_gauss();
        const double zt = om * x0 + t * z1;
        const double dz = (zt - z_query) / h;
        const double w = std::exp(-0.5 * dz * dz);
        wsum += w;
        wv += w * (z1 - x0);
        wz += w * zt;
        vs.push_back(z1 - x0);
        ws.push_back(w);
    }
    McEstimate est;
    est.v_hat = wv / wsum;
    est.z_bar = wz / wsum;
    double s2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double d = vs[i] - est.v_hat;
        s2 += ws[i] * ws[i] * d * d;
    }
    est.se = std::sqrt(s2) / wsum;
    return est;
}

void check_mc_velocity(Checker& check, RngState& rng) {
    double worst_sigmas = 0.0;
    for (const auto& [mu, sigma] : std::vector<std::pair<double, double>>{{0.7, 0.6},
                                                                          {-0.4, 0.15}}) {
        tasks::GaussianOracle oracle;
        oracle.mu = RealArray(1, 1, mu);
        oracle.sigma = sigma;
        for (double t : {0.0, 0.15, 0.5, 0.85, 1.0}) {
            const double s_t = oracle.marginal_std(t);
            const double z_query = (1.0 - t) * mu + 0.8 * s_t;
            const McEstimate est = mc_conditional_velocity(mu, sigma, t, z_query, 400000, rng);
            RealArray zq(1, 1, est.z_bar);
            const double closed = tasks::oracle_instantaneous_velocity(oracle, zq, t)(0, 0);
            worst_sigmas = std::max(worst_sigmas, std::abs(est.v_hat - closed) / est.se);
        }
    }
    check.add("mc_conditional_velocity", "closed_form_vs_mc_in_se_units", worst_sigmas, 3.0);

    // v*(mu, 0) = -mu at the data endpoint, checked to 1%.
    const double mu = 0.7, sigma = 0.1;
    const McEstimate est = mc_conditional_velocity(mu, sigma, 0.0, mu, 1000000, rng);
    check.add("mc_conditional_velocity", "endpoint_velocity_at_data_mean",
              std::abs(est.v_hat - (-mu)) / std::abs(mu), 0.01);
}

// -- family: euler_average_velocity --------------------------------------------

RealArray euler_transport_u(const tasks::GaussianOracle& oracle, const RealArray& z, double r,
                            double t, int steps) {
    RealArray state = z;
    const double h = (t - r) / static_cast<double>(steps);
    double tau = t;
    for (int k = 0; k < steps; ++k) {
        const RealArray v = tasks::oracle_instantaneous_velocity(oracle, state, tau);
        axpy(state, -h, v);
        tau -= h;
    }
    RealArray u = z - state;
    const double inv = 1.0 / (t - r);
    for (std::size_t i = 0; i < u.size(); ++i) {
        u.data()[i] *= inv;
    }
    return u;
}

void check_euler_average_velocity(Checker& check, RngState& rng, double perturbation) {
    tasks::GaussianOracle oracle;
    oracle.mu = RealArray::from_rows({{0.7, -0.4}});
    oracle.sigma = 0.6;

    double worst_rich = 0.0, worst_raw = 0.0;
    for (int pair = 0; pair < 64; ++pair) {
        double a = rng.next_unit(), b = rng.next_unit();
        if (a > b) {
            std::swap(a, b);
        }
        if (b - a < 1e-3) {
            b = std::min(1.0, a + 1e-3);
        }
        auto [mean, var] = tasks::oracle_marginal(oracle, b);
        RealArray z = gauss(rng, 128, 2);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                z(i, j) = mean(0, j) + std::sqrt(var) * z(i, j);
            }
        }
        // Closed form, with the optional canary perturbation on the transport
        // coefficient s_r / s_t.
        const double ratio = (1.0 + perturbation) * oracle.marginal_std(a) / oracle.marginal_std(b);
        RealArray closed(z.rows(), 2);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                const double mu = oracle.mu(0, j);
                const double z_r = (1.0 - a) * mu + ratio * (z(i, j) - (1.0 - b) * mu);
                closed(i, j) = (z(i, j) - z_r) / (b - a);
            }
        }
        const RealArray u4096 = euler_transport_u(oracle, z, a, b, 4096);
        const RealArray u2048 = euler_transport_u(oracle, z, a, b, 2048);
        RealArray rich = u4096;
        for (std::size_t i = 0; i < rich.size(); ++i) {
            rich.data()[i] = 2.0 * u4096.data()[i] - u2048.data()[i];
        }
        worst_rich = std::max(worst_rich, rel_norm_err(closed, rich));
        worst_raw = std::max(worst_raw, rel_norm_err(closed, u4096));
    }
    // The K=4096 grid alone carries ~3e-4 of its own truncation error; one
    // Richardson step over the 2048/4096 Euler grids removes it, which is what
    // makes the 1e-4 gate a test of the closed form rather than of Euler.
    check.add("euler_average_velocity", "closed_form_vs_richardson_euler4096", worst_rich, 1e-4);
    check.add("euler_average_velocity", "closed_form_vs_raw_euler4096", worst_raw, 1e-3);
}

// -- family: transport_marginal -------------------------------------------------

void check_transport_marginal(Checker& check, RngState& rng) {
    tasks::GaussianOracle oracle;
    oracle.mu = RealArray::from_rows({{0.9, -0.3}});
    oracle.sigma = 0.5;
    const std::size_t n = 10000;
    RealArray z1 = gauss(rng, n, 2);
    const RealArray u = tasks::oracle_average_velocity(oracle, z1, 0.0, 1.0);
    RealArray x = z1 - u;
    auto [mean, var] = mean_var(x);
    double worst_mean = 0.0, worst_var = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
        worst_mean = std::max(worst_mean, std::abs(mean(0, j) - oracle.mu(0, j)) /
                                              std::max(1.0, std::abs(oracle.mu(0, j))));
        worst_var =
            std::max(worst_var, std::abs(var(0, j) / (oracle.sigma * oracle.sigma) - 1.0));
    }
    check.add("transport_marginal", "one_step_transport_mean_rel", worst_mean, 0.02);
    check.add("transport_marginal", "one_step_transport_var_rel", worst_var, 0.02);
}

// -- family: interpolation_marginal ----------------------------------------------

void check_interpolation_marginal(Checker& check, RngState& rng) {
    const tasks::TaskSpec spec = tasks::TaskSpec::cond_gauss(2, 2, 0.4, 0.0);
    RealArray c_fixed(1, 2, 0.0);
    const tasks::GaussianOracle oracle = tasks::make_gaussian_oracle(spec, c_fixed);
    const std::size_t n = 10000;
    RealArray c_rows(n, 2, 0.0);
    RngState data_rng = rng.split(31);
    RealArray x0 = tasks::draw_given(spec, c_rows, data_rng);
    RealArray z1 = gauss(rng, n, 2);
    double worst = 0.0;
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const RealArray z_t = flowcore::interpolate(x0, z1, t);
        auto [mean, var] = mean_var(z_t);
        auto [omean, ovar] = tasks::oracle_marginal(oracle, t);
        for (std::size_t j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(mean(0, j) - omean(0, j)) /
                                        std::max(1.0, std::abs(omean(0, j))));
            worst = std::max(worst, std::abs(var(0, j) / ovar - 1.0));
        }
    }
    check.add("interpolation_marginal", "interpolated_moments_vs_marginal_law", worst, 0.03);
}

// -- family: adam_fixed_point ------------------------------------------------------

void check_adam_constant_gradient(Checker& check) {
    net::NetworkArch arch;
    arch.input_dim = 1;
    arch.cond_dim = 1;
    arch.hidden = {2};
    arch.time_embed_dim = 1;
    RngState rng(5);
    net::NetworkParams params = net::init_params(arch, rng);
    net::AdamState state = net::AdamState::init(params, {});
    net::ParamGrads grads;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        grads.weights.emplace_back(params.weights[l].rows(), params.weights[l].cols(), 1.0);
        grads.biases.emplace_back(1, params.biases[l].cols(), 1.0);
    }
    net::NetworkParams prev = params;
    for (int step = 0; step < 200; ++step) {
        prev = params;
        net::adam_step(params, grads, state);
    }
    double worst = 0.0;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        for (std::size_t i = 0; i < params.weights[l].size(); ++i) {
            const double delta =
                std::abs(params.weights[l].data()[i] - prev.weights[l].data()[i]);
            worst = std::max(worst, std::abs(delta / state.config.lr - 1.0));
        }
    }
    check.add("adam_fixed_point", "constant_gradient_step_magnitude", worst, 0.05);
}

// -- family: linear_net_exactness ----------------------------------------------------

void check_linear_net(Checker& check, RngState& rng) {
    net::NetworkArch arch;
    arch.input_dim = 3;
    arch.cond_dim = 2;
    arch.hidden = {arch.input_dim + 2 + arch.cond_dim};
    arch.activation = net::Activation::identity;
    arch.time_embed_dim = 2;

    RngState init = rng.split(77);
    net::NetworkParams params = net::init_params(arch, init);
    // First layer selects [z, r, t, c] out of the feature vector; second layer
    // applies a random matrix A. The network is then exactly affine.
    const std::size_t d = arch.input_dim, k = arch.cond_dim, tf = arch.time_feature_dim();
    for (std::size_t i = 0; i < params.weights[0].size(); ++i) {
        params.weights[0].data()[i] = 0.0;
    }
    for (std::size_t j = 0; j < d; ++j) {
        params.weights[0](j, j) = 1.0;  // z block
    }
    params.weights[0](d + k, d) = 1.0;           // raw r feature
    params.weights[0](d + k + tf, d + 1) = 1.0;  // raw t feature
    for (std::size_t j = 0; j < k; ++j) {
        params.weights[0](d + j, d + 2 + j) = 1.0;  // c block
    }
    for (std::size_t i = 0; i < params.biases[0].size(); ++i) {
        params.biases[0].data()[i] = 0.0;
    }
    RealArray a_matrix = gauss(rng, d + 2 + k, d);  // [z; r; t; c] -> u
    params.weights[1] = a_matrix;
    for (std::size_t i = 0; i < params.biases[1].size(); ++i) {
        params.biases[1].data()[i] = 0.0;
    }

    const std::size_t n = 8;
    RandomEvalPoint p = random_point(arch, rng, n);
    const net::ForwardResult fr = net::forward(params, p.z, p.r, p.t, p.c);
    RealArray stacked(n, d + 2 + k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            stacked(i, j) = p.z(i, j);
        }
        stacked(i, d) = p.r(i, 0);
        stacked(i, d + 1) = p.t(i, 0);
        for (std::size_t j = 0; j < k; ++j) {
            stacked(i, d + 2 + j) = p.c(i, j);
        }
    }
    const RealArray direct = matmul(stacked, a_matrix);
    check.add("linear_net_exactness", "identity_mlp_vs_direct_matrix", rel_norm_err(fr.u, direct),
              1e-12);

    net::InputTangent tangent;
    tangent.dz = gauss(rng, n, d);
    tangent.dr = 0.3;
    tangent.dt = -0.8;
    const net::JvpResult jvp = net::forward_jvp(params, p.z, p.r, p.t, p.c, tangent);
    RealArray dstacked(n, d + 2 + k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            dstacked(i, j) = tangent.dz(i, j);
        }
        dstacked(i, d) = tangent.dr;
        dstacked(i, d + 1) = tangent.dt;
    }
    const RealArray ddirect = matmul(dstacked, a_matrix);
    check.add("linear_net_exactness", "identity_mlp_jvp_vs_direct_matrix",
              rel_norm_err(jvp.du, ddirect), 1e-12);
}

// -- family: renoise_variance_identity -------------------------------------------------

void check_renoise_variance(Checker& check, RngState& rng) {
    const double alpha = 0.15;
    const std::size_t n = 2048;
    RealArray z1 = gauss(rng, n, 3);
    // Correlated coarse sample so the covariance term matters.
    RealArray coarse = z1;
    RealArray extra = gauss(rng, n, 3);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        coarse.data()[i] = 0.4 + 0.6 * coarse.data()[i] + 0.3 * extra.data()[i];
    }
    const RealArray mixed = samplers::renoise(coarse, z1, alpha);
    auto [m_mix, v_mix] = mean_var(mixed);
    auto [m_z, v_z] = mean_var(z1);
    auto [m_c, v_c] = mean_var(coarse);
    const RealArray cov = col_covariance(z1, coarse);
    double worst = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double rhs = alpha * alpha * v_z(0, j) + (1.0 - alpha) * (1.0 - alpha) * v_c(0, j) +
                           2.0 * alpha * (1.0 - alpha) * cov(0, j);
        worst = std::max(worst, std::abs(v_mix(0, j) - rhs));
    }
    check.add("renoise_variance_identity", "empirical_variance_decomposition", worst, 1e-10);
}

}  // namespace

bool oracle_check(std::ostream& out, const OracleCheckOptions& options) {
    Checker check(out);
    RngState rng(options.seed);
    check_jvp_fd(check, rng);
    check_grad_fd(check, rng);
    check_mc_velocity(check, rng);
    check_euler_average_velocity(check, rng, options.coefficient_perturbation);
    check_transport_marginal(check, rng);
    check_interpolation_marginal(check, rng);
    check_adam_constant_gradient(check);
    check_linear_net(check, rng);
    check_renoise_variance(check, rng);
    return check.summarize();
}

}  // namespace hf::harness
