#include "hf/tasks.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace hf::tasks {

std::string task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::cond_gauss:
            return "cond_gauss";
        case TaskKind::cond_gmm2d:
            return "cond_gmm2d";
        case TaskKind::action_chunk_spline:
            return "action_chunk_spline";
    }
    return "cond_gmm2d";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "cond_gauss") return TaskKind::cond_gauss;
    if (name == "cond_gmm2d") return TaskKind::cond_gmm2d;
    if (name == "action_chunk_spline") return TaskKind::action_chunk_spline;
    throw ValidationError("unknown task: " + name);
}

TaskSpec TaskSpec::cond_gauss(std::size_t dim, std::size_t cond_dim, double sigma,
                              double coupling) {
    TaskSpec spec;
    spec.kind = TaskKind::cond_gauss;
    spec.dim = dim;
    spec.cond_dim = cond_dim;
    spec.gauss_mean_base = RealArray(1, dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        spec.gauss_mean_base(0, j) = j % 2 == 0 ? 0.3 : -0.2;
    }
    spec.gauss_sigma = sigma;
    spec.cond_coupling = coupling;
    spec.validate();
    return spec;
}

TaskSpec TaskSpec::cond_gmm2d() {
    TaskSpec spec;
    spec.kind = TaskKind::cond_gmm2d;
    spec.dim = 2;
    spec.cond_dim = 4;
    spec.validate();
    return spec;
}

TaskSpec TaskSpec::action_chunk_spline() {
    TaskSpec spec;
    spec.kind = TaskKind::action_chunk_spline;
    spec.horizon = 16;
    spec.dof = 2;
    spec.knots = 4;
    spec.dim = spec.horizon * spec.dof;
    spec.cond_dim = 2 * spec.dof;  // start and goal
    spec.validate();
    return spec;
}

TaskSpec TaskSpec::by_name(const std::string& name) {
    switch (task_from_name(name)) {
        case TaskKind::cond_gauss:
            return cond_gauss();
        case TaskKind::cond_gmm2d:
            return cond_gmm2d();
        case TaskKind::action_chunk_spline:
            return action_chunk_spline();
    }
    throw ValidationError("unknown task: " + name);
}

void TaskSpec::validate() const {
    if (dim < 1 || cond_dim < 1) {
        throw ValidationError("task: dim and cond_dim must be >= 1");
    }
    switch (kind) {
        case TaskKind::cond_gauss:
            if (gauss_sigma <= 0.0) {
                throw ValidationError("cond_gauss: sigma must be > 0");
            }
            if (gauss_mean_base.size() != dim) {
                throw ValidationError("cond_gauss: mean_base must have length dim");
            }
            break;
        case TaskKind::cond_gmm2d:
            if (dim != 2) {
                throw ValidationError("cond_gmm2d: dim must be 2");
            }
            if (gmm_components < 2 || cond_dim != gmm_components) {
                throw ValidationError("cond_gmm2d: cond_dim must equal component count (one-hot)");
            }
            if (gmm_sigma <= 0.0 || gmm_radius <= 0.0) {
                throw ValidationError("cond_gmm2d: radius and sigma must be > 0");
            }
            break;
        case TaskKind::action_chunk_spline:
            if (dim != horizon * dof) {
                throw ValidationError("action_chunk_spline: dim must equal horizon * dof");
            }
            if (cond_dim != 2 * dof) {
                throw ValidationError("action_chunk_spline: cond_dim must equal 2 * dof");
            }
            if (knots != 4 || horizon < 4) {
                throw ValidationError("action_chunk_spline: 4 knots, horizon >= 4");
            }
            break;
    }
}

namespace {

RealArray gmm_center(const TaskSpec& spec, std::size_t k) {
    RealArray center(1, 2);
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.gmm_components);
    center(0, 0) = spec.gmm_radius * std::cos(angle);
    center(0, 1) = spec.gmm_radius * std::sin(angle);
    return center;
}

// Natural cubic spline through `values` at equispaced parameters, evaluated at
// `horizon` equispaced sample positions. Four knots reduce the moment system
// to a 2x2 solve.
void eval_natural_cubic4(const double values[4], std::size_t horizon, double step, double* out,
                         std::size_t stride) {
    const double h = 1.0 / 3.0;
    const double d1 = 6.0 * (values[0] - 2.0 * values[1] + values[2]) / (h * h);
    const double d2 = 6.0 * (values[1] - 2.0 * values[2] + values[3]) / (h * h);
    // [4 1; 1 4] [m1 m2]^T = [d1 d2]^T
    const double m1 = (4.0 * d1 - d2) / 15.0;
    const double m2 = (4.0 * d2 - d1) / 15.0;
    const double moments[4] = {0.0, m1, m2, 0.0};
    for (std::size_t i = 0; i < horizon; ++i) {
        const double tau = static_cast<double>(i) * step;
        std::size_t seg = std::min<std::size_t>(2, static_cast<std::size_t>(tau / h));
        const double t0 = static_cast<double>(seg) * h;
        const double a = (t0 + h - tau) / h;
        const double b = (tau - t0) / h;
        const double y = a * values[seg] + b * values[seg + 1] +
                         ((a * a * a - a) * moments[seg] + (b * b * b - b) * moments[seg + 1]) *
                             (h * h) / 6.0;
        out[i * stride] = y;
    }
}

void draw_one(const TaskSpec& spec, RngState& rng, RealArray& x0, RealArray& c, std::size_t i) {
    switch (spec.kind) {
        case TaskKind::cond_gauss: {
            for (std::size_t j = 0; j < spec.cond_dim; ++j) {
                c(i, j) = -1.0 + 2.0 * rng.next_unit();
            }
            for (std::size_t j = 0; j < spec.dim; ++j) {
                const double mu = spec.gauss_mean_base(0, j) +
                                  spec.cond_coupling * c(i, j % spec.cond_dim);
                x0(i, j) = mu + spec.gauss_sigma * rng.next_gauss();
            }
            break;
        }
        case TaskKind::cond_gmm2d: {
            const auto k = static_cast<std::size_t>(rng.next_unit() *
                                                    static_cast<double>(spec.gmm_components));
            const std::size_t comp = std::min(k, spec.gmm_components - 1);
            for (std::size_t j = 0; j < spec.cond_dim; ++j) {
                c(i, j) = j == comp ? 1.0 : 0.0;
            }
            const RealArray center = gmm_center(spec, comp);
            x0(i, 0) = center(0, 0) + spec.gmm_sigma * rng.next_gauss();
            x0(i, 1) = center(0, 1) + spec.gmm_sigma * rng.next_gauss();
            break;
        }
        case TaskKind::action_chunk_spline: {
            // Knots: start, two interior points, goal; each dof independent.
            double kx[4], ky[4];
            for (double* arr : {kx, ky}) {
                for (int s = 0; s < 4; ++s) {
                    arr[s] = -1.0 + 2.0 * rng.next_unit();
                }
            }
            c(i, 0) = kx[0];
            c(i, 1) = ky[0];
            c(i, 2) = kx[3];
            c(i, 3) = ky[3];
            const double step = 1.0 / static_cast<double>(spec.horizon - 1);
            eval_natural_cubic4(kx, spec.horizon, step, &x0(i, 0), spec.dof);
            eval_natural_cubic4(ky, spec.horizon, step, &x0(i, 1), spec.dof);
            break;
        }
    }
}

void draw_x0_given(const TaskSpec& spec, const RealArray& c, RngState& rng, RealArray& x0,
                   std::size_t i) {
    switch (spec.kind) {
        case TaskKind::cond_gauss: {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                const double mu = spec.gauss_mean_base(0, j) +
                                  spec.cond_coupling * c(i, j % spec.cond_dim);
                x0(i, j) = mu + spec.gauss_sigma * rng.next_gauss();
            }
            break;
        }
        case TaskKind::cond_gmm2d: {
            std::size_t comp = 0;
            double best = c(i, 0);
            for (std::size_t j = 1; j < spec.cond_dim; ++j) {
                if (c(i, j) > best) {
                    best = c(i, j);
                    comp = j;
                }
            }
            const RealArray center = gmm_center(spec, comp);
            x0(i, 0) = center(0, 0) + spec.gmm_sigma * rng.next_gauss();
            x0(i, 1) = center(0, 1) + spec.gmm_sigma * rng.next_gauss();
            break;
        }
        case TaskKind::action_chunk_spline: {
            double kx[4], ky[4];
            kx[0] = c(i, 0);
            ky[0] = c(i, 1);
            kx[3] = c(i, 2);
            ky[3] = c(i, 3);
            for (int s = 1; s <= 2; ++s) {
                kx[s] = -1.0 + 2.0 * rng.next_unit();
                ky[s] = -1.0 + 2.0 * rng.next_unit();
            }
            const double step = 1.0 / static_cast<double>(spec.horizon - 1);
            eval_natural_cubic4(kx, spec.horizon, step, &x0(i, 0), spec.dof);
            eval_natural_cubic4(ky, spec.horizon, step, &x0(i, 1), spec.dof);
            break;
        }
    }
}

}  // namespace

ConditionedBatch draw(const TaskSpec& spec, RngState& rng, std::size_t n) {
    spec.validate();
    if (n < 1) {
        throw DomainError("draw: n must be >= 1");
    }
    ConditionedBatch batch{RealArray(n, spec.dim), RealArray(n, spec.cond_dim)};
    for (std::size_t i = 0; i < n; ++i) {
        draw_one(spec, rng, batch.x0, batch.c, i);
    }
    return batch;
}

RealArray draw_conditions(const TaskSpec& spec, RngState& rng, std::size_t n) {
    // Same per-sample stream layout as draw(); data draws are discarded.
    return draw(spec, rng, n).c;
}

RealArray draw_given(const TaskSpec& spec, const RealArray& c, RngState& rng) {
    spec.validate();
    if (c.cols() != spec.cond_dim) {
        throw ShapeError("draw_given: condition width mismatch");
    }
    RealArray x0(c.rows(), spec.dim);
    for (std::size_t i = 0; i < c.rows(); ++i) {
        draw_x0_given(spec, c, rng, x0, i);
    }
    return x0;
}

// -- oracle ---------------------------------------------------------------------

bool has_gaussian_oracle(const TaskSpec& spec) {
    return spec.kind == TaskKind::cond_gauss || spec.kind == TaskKind::cond_gmm2d;
}

GaussianOracle make_gaussian_oracle(const TaskSpec& spec, const RealArray& c_row) {
    if (!has_gaussian_oracle(spec)) {
        throw DomainError("no closed-form oracle for task " + spec.name());
    }
    if (c_row.rows() != 1 || c_row.cols() != spec.cond_dim) {
        throw ShapeError("make_gaussian_oracle: condition must be 1 x cond_dim");
    }
    GaussianOracle oracle;
    oracle.mu = oracle_mu(spec, c_row);
    oracle.sigma = spec.kind == TaskKind::cond_gauss ? spec.gauss_sigma : spec.gmm_sigma;
    return oracle;
}

RealArray oracle_mu(const TaskSpec& spec, const RealArray& c_row) {
    if (spec.kind == TaskKind::cond_gauss) {
        RealArray mu(1, spec.dim);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            mu(0, j) = spec.gauss_mean_base(0, j) +
                       spec.cond_coupling * c_row(0, j % spec.cond_dim);
        }
        return mu;
    }
    if (spec.kind == TaskKind::cond_gmm2d) {
        std::size_t comp = 0;
        double best = c_row(0, 0);
        for (std::size_t j = 1; j < spec.cond_dim; ++j) {
            if (c_row(0, j) > best) {
                best = c_row(0, j);
                comp = j;
            }
        }
        return gmm_center(spec, comp);
    }
    throw DomainError("oracle_mu: task has no Gaussian conditional mean");
}

double GaussianOracle::marginal_std(double t) const {
    const double om = 1.0 - t;
    return std::sqrt(om * om * sigma * sigma + t * t);
}

namespace {

void check_oracle_time(double t, const char* who) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError(std::string(who) + ": t must lie in [0,1]");
    }
}

}  // namespace

RealArray oracle_instantaneous_velocity(const GaussianOracle& oracle, const RealArray& z,
                                        double t) {
    check_oracle_time(t, "oracle_instantaneous_velocity");
    if (z.cols() != oracle.mu.cols()) {
        throw ShapeError("oracle velocity: z width must match oracle dimension");
    }
    const double om = 1.0 - t;
    const double s2 = om * om * oracle.sigma * oracle.sigma + t * t;
    const double a = (t - om * oracle.sigma * oracle.sigma) / s2;
    RealArray v(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double mu = oracle.mu(0, j);
            v(i, j) = a * (z(i, j) - om * mu) - mu;
        }
    }
    return v;
}

RealArray oracle_transport(const GaussianOracle& oracle, const RealArray& z, double from_t,
                           double to_t) {
    check_oracle_time(from_t, "oracle_transport");
    check_oracle_time(to_t, "oracle_transport");
    if (z.cols() != oracle.mu.cols()) {
        throw ShapeError("oracle_transport: z width must match oracle dimension");
    }
    const double ratio = oracle.marginal_std(to_t) / oracle.marginal_std(from_t);
    RealArray out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double mu = oracle.mu(0, j);
            out(i, j) = (1.0 - to_t) * mu + ratio * (z(i, j) - (1.0 - from_t) * mu);
        }
    }
    return out;
}

RealArray oracle_average_velocity(const GaussianOracle& oracle, const RealArray& z_t, double r,
                                  double t) {
    check_oracle_time(r, "oracle_average_velocity");
    check_oracle_time(t, "oracle_average_velocity");
    if (r > t) {
        throw DomainError("oracle_average_velocity: requires r <= t");
    }
    if (r == t) {
        return oracle_instantaneous_velocity(oracle, z_t, t);
    }
    RealArray z_r = oracle_transport(oracle, z_t, t, r);
    RealArray u = z_t - z_r;
    const double inv = 1.0 / (t - r);
    for (std::size_t i = 0; i < u.size(); ++i) {
        u.data()[i] *= inv;
    }
    return u;
}

std::pair<RealArray, double> oracle_marginal(const GaussianOracle& oracle, double t) {
    check_oracle_time(t, "oracle_marginal");
    RealArray mean = oracle.mu;
    for (std::size_t j = 0; j < mean.cols(); ++j) {
        mean(0, j) *= (1.0 - t);
    }
    const double s = oracle.marginal_std(t);
    return {std::move(mean), s * s};
}

double oracle_avg_velocity_lipschitz(const GaussianOracle& oracle, double r, double t) {
    if (r == t) {
        const double om = 1.0 - t;
        const double s2 = om * om * oracle.sigma * oracle.sigma + t * t;
        return std::abs((t - om * oracle.sigma * oracle.sigma) / s2);
    }
    return std::abs(1.0 - oracle.marginal_std(r) / oracle.marginal_std(t)) / (t - r);
}

// -- dataset files ----------------------------------------------------------------

void dump_dataset(const std::filesystem::path& path, const ConditionedBatch& batch,
                  const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open dataset for writing: " + path.string());
    }
    if (!header_comment.empty()) {
        out << "# " << header_comment << "\n";
    }
    for (std::size_t j = 0; j < batch.c.cols(); ++j) {
        out << (j ? "," : "") << "c_" << j;
    }
    for (std::size_t j = 0; j < batch.x0.cols(); ++j) {
        out << ",x_" << j;
    }
    out << "\n";
    for (std::size_t i = 0; i < batch.x0.rows(); ++i) {
        for (std::size_t j = 0; j < batch.c.cols(); ++j) {
            out << (j ? "," : "") << fmt_double(batch.c(i, j));
        }
        for (std::size_t j = 0; j < batch.x0.cols(); ++j) {
            out << "," << fmt_double(batch.x0(i, j));
        }
        out << "\n";
    }
    if (!out) {
        throw IoError("dataset write failed: " + path.string());
    }
}

ConditionedBatch load_dataset(const std::filesystem::path& path, std::size_t cond_dim) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open dataset: " + path.string());
    }
    std::string line;
    std::vector<std::vector<double>> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (!header_seen) {
            header_seen = true;  // column names
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().size() <= cond_dim) {
        throw IoError("dataset is empty or narrower than cond_dim: " + path.string());
    }
    const std::size_t dim = rows.front().size() - cond_dim;
    ConditionedBatch batch{RealArray(rows.size(), dim), RealArray(rows.size(), cond_dim)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim + cond_dim) {
            throw IoError("ragged dataset row " + std::to_string(i));
        }
        for (std::size_t j = 0; j < cond_dim; ++j) {
            batch.c(i, j) = rows[i][j];
        }
        for (std::size_t j = 0; j < dim; ++j) {
            batch.x0(i, j) = rows[i][cond_dim + j];
        }
    }
    return batch;
}

}  // namespace hf::tasks
