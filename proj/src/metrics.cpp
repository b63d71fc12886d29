#include "hf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace hf::metrics {

namespace {

double pair_mean_distance(const RealArray& a, const RealArray& b) {
    // Mean over all ordered pairs; per-row partial sums keep the reduction
    // order fixed.
    const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * d;
        double rowsum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * d;
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ai[k] - bj[k];
                acc += diff * diff;
            }
            rowsum += std::sqrt(acc);
        }
        total += rowsum;
    }
    return total / (static_cast<double>(n) * static_cast<double>(m));
}

double pair_mean_kernel(const RealArray& a, const RealArray& b, double inv_two_h2) {
    const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * d;
        double rowsum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * d;
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ai[k] - bj[k];
                acc += diff * diff;
            }
            rowsum += std::exp(-acc * inv_two_h2);
        }
        total += rowsum;
    }
    return total / (static_cast<double>(n) * static_cast<double>(m));
}

void check_two_sample(const RealArray& a, const RealArray& b, const char* who) {
    if (a.cols() != b.cols()) {
        throw ShapeError(std::string(who) + ": dimension mismatch");
    }
    if (a.rows() < 2 || b.rows() < 2) {
        throw DomainError(std::string(who) + ": need at least 2 points per sample");
    }
}

}  // namespace

namespace {

// Canonical argument order (rows, then lexicographic data) so that swapping
// the two samples traverses identical floating-point sums.
bool canonical_before(const RealArray& a, const RealArray& b) {
    if (a.rows() != b.rows()) {
        return a.rows() < b.rows();
    }
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        if (a.data()[i] != b.data()[i]) {
            return a.data()[i] < b.data()[i];
        }
    }
    return false;
}

}  // namespace

double energy_distance(const RealArray& a, const RealArray& b) {
    check_two_sample(a, b, "energy_distance");
    const RealArray& first = canonical_before(b, a) ? b : a;
    const RealArray& second = canonical_before(b, a) ? a : b;
    return 2.0 * pair_mean_distance(first, second) - pair_mean_distance(first, first) -
           pair_mean_distance(second, second);
}

double mmd_rbf(const RealArray& a, const RealArray& b, double bandwidth) {
    check_two_sample(a, b, "mmd_rbf");
    if (!(bandwidth > 0.0)) {
        throw DomainError("mmd_rbf: bandwidth must be > 0");
    }
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    return pair_mean_kernel(a, a, inv) + pair_mean_kernel(b, b, inv) -
           2.0 * pair_mean_kernel(a, b, inv);
}

double median_heuristic_bandwidth(const RealArray& a, const RealArray& b, std::size_t cap) {
    check_two_sample(a, b, "median_heuristic_bandwidth");
    const std::size_t total = a.rows() + b.rows();
    const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(cap, 2));
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < total; i += stride) {
        const RealArray& src = i < a.rows() ? a : b;
        const std::size_t row = i < a.rows() ? i : i - a.rows();
        points.emplace_back(src.row(row).begin(), src.row(row).end());
    }
    std::vector<double> dists;
    dists.reserve(points.size() * (points.size() - 1) / 2);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < points[i].size(); ++k) {
                const double diff = points[i][k] - points[j][k];
                acc += diff * diff;
            }
            dists.push_back(std::sqrt(acc));
        }
    }
    if (dists.empty()) {
        throw DomainError("median_heuristic_bandwidth: not enough points");
    }
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

std::string val_mode_name(ValMode mode) {
    return mode == ValMode::reflow ? "reflow" : "meanflow";
}

double validation_loss(const net::NetworkParams& params, const flowcore::PathBatch& batch,
                       ValMode mode) {
    if (batch.size() == 0) {
        throw DomainError("validation_loss: empty batch");
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const bool degenerate = batch.r(i, 0) == batch.t(i, 0);
        if (mode == ValMode::reflow && !degenerate) {
            throw DomainError("validation_loss: reflow mode expects r = t pairs");
        }
        if (mode == ValMode::meanflow && degenerate) {
            throw DomainError("validation_loss: meanflow mode expects r < t pairs");
        }
    }
    // Shared evaluation path with training: for degenerate pairs the JVP term
    // vanishes through the (t - r) factor and the target reduces to v_star.
    return flowcore::unified_loss(params, batch);
}

double lipschitz_estimate(const net::NetworkParams& params, const RealArray& probes, double t,
                          const RealArray& c, RngState& rng, double eps,
                          std::size_t directions) {
    if (!(eps > 0.0)) {
        throw DomainError("lipschitz_estimate: eps must be > 0");
    }
    if (probes.rows() != c.rows()) {
        throw ShapeError("lipschitz_estimate: probes and conditions must align");
    }
    const std::size_t n = probes.rows(), d = probes.cols();
    RealArray tcol(n, 1, t);
    const RealArray base = net::forward(params, probes, tcol, tcol, c).u;

    double worst = 0.0;
    for (std::size_t dir = 0; dir < directions; ++dir) {
        RealArray w = gauss(rng, 1, d);
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            norm += w(0, j) * w(0, j);
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            continue;
        }
        RealArray shifted = probes;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                shifted(i, j) += eps * w(0, j) / norm;
            }
        }
        const RealArray pert = net::forward(params, shifted, tcol, tcol, c).u;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = pert(i, j) - base(i, j);
                acc += diff * diff;
            }
            worst = std::max(worst, std::sqrt(acc) / eps);
        }
    }
    return worst;
}

double gaussian_moment_kl(const RealArray& mean_p, const RealArray& var_p,
                          const RealArray& mean_q, double var_q) {
    if (!mean_p.same_shape(var_p) || !mean_p.same_shape(mean_q)) {
        throw ShapeError("gaussian_moment_kl: moment shapes must match");
    }
    if (!(var_q > 0.0)) {
        throw DomainError("gaussian_moment_kl: var_q must be > 0");
    }
    double kl = 0.0;
    for (std::size_t j = 0; j < mean_p.cols(); ++j) {
        const double vp = var_p(0, j);
        if (!(vp > 0.0)) {
            throw DomainError("gaussian_moment_kl: fitted variance must be > 0");
        }
        const double dm = mean_p(0, j) - mean_q(0, j);
        kl += 0.5 * std::log(var_q / vp) + (vp + dm * dm) / (2.0 * var_q) - 0.5;
    }
    return kl;
}

std::vector<ShiftEstimate> shift_audit(const samplers::VelocityField& field,
                                       const samplers::SamplerSpec& spec,
                                       const tasks::GaussianOracle& oracle,
                                       const RealArray& c_row, std::size_t n, RngState& rng) {
    if (n < 2) {
        throw DomainError("shift_audit: need n >= 2");
    }
    const std::size_t d = oracle.mu.cols();
    RealArray z1 = gauss(rng, n, d);
    RealArray c(n, c_row.cols());
    for (std::size_t i = 0; i < n; ++i) {
        c.set_row(i, c_row);
    }
    samplers::SampleResult result = samplers::run_sampler(field, z1, c, spec, &rng);

    std::vector<ShiftEstimate> shifts;
    auto add = [&](int step, double time, const std::string& label, const RealArray& states) {
        auto [mean, var] = mean_var(states);
        auto [omean, ovar] = tasks::oracle_marginal(oracle, time);
        shifts.push_back({step, time, label, gaussian_moment_kl(mean, var, omean, ovar)});
    };
    add(0, 1.0, "noise", z1);
    int step = 1;
    for (const samplers::StageState& s : result.trace.stages) {
        add(step++, s.time, s.label, s.state);
    }
    return shifts;
}

ErrorAudit error_accumulation_audit(const samplers::VelocityField& field,
                                    const tasks::GaussianOracle& oracle, const RealArray& c_row,
                                    int steps, std::size_t n, RngState& rng,
                                    bool displacement_scaling) {
    if (steps < 1) {
        throw DomainError("error_accumulation_audit: K must be >= 1");
    }
    if (n < 1) {
        throw DomainError("error_accumulation_audit: n must be >= 1");
    }
    const std::size_t d = oracle.mu.cols();
    RealArray z = gauss(rng, n, d);
    RealArray z_star = z;
    RealArray c(n, c_row.cols());
    for (std::size_t i = 0; i < n; ++i) {
        c.set_row(i, c_row);
    }

    ErrorAudit audit;
    std::vector<double> prev_dev(n, 0.0);
    std::vector<bool> ok(n, true);
    const double h = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t_hi = 1.0 - static_cast<double>(k) * h;
        const double t_lo = k + 1 == steps ? 0.0 : t_hi - h;
        const double step_scale = displacement_scaling ? (t_hi - t_lo) : 1.0;

        RealArray u_model = field(z, t_lo, t_hi, c);
        RealArray u_true = tasks::oracle_average_velocity(oracle, z, t_lo, t_hi);
        RealArray err = u_model - u_true;
        axpy(z, -step_scale, u_model);
        z_star = tasks::oracle_transport(oracle, z_star, t_hi, t_lo);

        const double lips = tasks::oracle_avg_velocity_lipschitz(oracle, t_lo, t_hi);
        ErrorAuditRow row;
        row.step = k;
        row.t_hi = t_hi;
        row.t_lo = t_lo;
        row.lipschitz = lips;
        std::size_t within = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double enorm = 0.0, dev = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                enorm += err(i, j) * err(i, j);
                const double dd = z(i, j) - z_star(i, j);
                dev += dd * dd;
            }
            enorm = std::sqrt(enorm);
            dev = std::sqrt(dev);
            row.mean_step_error += enorm;
            row.mean_deviation += dev;
            const double bound =
                (1.0 + step_scale * lips) * prev_dev[i] + step_scale * enorm + 1e-12;
            if (dev > bound) {
                ok[i] = false;
            } else {
                ++within;
            }
            prev_dev[i] = dev;
        }
        row.mean_step_error /= static_cast<double>(n);
        row.mean_deviation /= static_cast<double>(n);
        row.bound_fraction = static_cast<double>(within) / static_cast<double>(n);
        audit.rows.push_back(row);
    }
    std::size_t all_ok = 0;
    for (bool flag : ok) {
        all_ok += flag ? 1 : 0;
    }
    audit.trajectories_within_bound = static_cast<double>(all_ok) / static_cast<double>(n);
    return audit;
}

void MetricReport::add(MetricEntry entry) {
    if (!std::isfinite(entry.value)) {
        throw NumericError("metric entry '" + entry.metric + "' is not finite");
    }
    entries.push_back(std::move(entry));
}

const MetricEntry* MetricReport::find(const std::string& metric,
                                      const std::string& sampler) const {
    for (const MetricEntry& e : entries) {
        if (e.metric == metric && e.sampler == sampler) {
            return &e;
        }
    }
    return nullptr;
}

void MetricReport::write_csv(const std::filesystem::path& path,
                             const std::string& header_comment) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open metric report: " + path.string());
    }
    out << "# hybridflow-metrics schema=1";
    if (!header_comment.empty()) {
        out << " " << header_comment;
    }
    out << "\n";
    out << "metric,value,task,sampler,K,alpha,seed,n\n";
    for (const MetricEntry& e : entries) {
        out << e.metric << "," << fmt_double(e.value) << "," << e.task << "," << e.sampler << ","
            << e.steps << "," << fmt_double(e.alpha) << "," << e.seed << "," << e.n << "\n";
    }
    if (!out) {
        throw IoError("metric report write failed: " + path.string());
    }
}

}  // namespace hf::metrics
