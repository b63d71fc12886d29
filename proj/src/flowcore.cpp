#include "hf/flowcore.hpp"

#include <cmath>

namespace hf::flowcore {

TimePair::TimePair(double r_, double t_) : r(r_), t(t_) {
    if (!(r >= 0.0 && t <= 1.0 && r <= t)) {
        throw DomainError("TimePair: need 0 <= r <= t <= 1");
    }
}

void TimeSamplingConfig::validate() const {
    if (!(p_degenerate >= 0.0 && p_degenerate <= 1.0)) {
        throw ValidationError("time sampling: p_degenerate must lie in [0,1]");
    }
    if (logit_sigma <= 0.0) {
        throw ValidationError("time sampling: logit_sigma must be > 0");
    }
}

std::string time_dist_name(TimeSamplingConfig::Dist d) {
    return d == TimeSamplingConfig::Dist::uniform ? "uniform" : "logit_normal";
}

TimeSamplingConfig::Dist time_dist_from_name(const std::string& name) {
    if (name == "uniform") return TimeSamplingConfig::Dist::uniform;
    if (name == "logit_normal") return TimeSamplingConfig::Dist::logit_normal;
    throw ValidationError("unknown time distribution: " + name);
}

namespace {

double draw_time(RngState& rng, const TimeSamplingConfig& cfg) {
    if (cfg.dist == TimeSamplingConfig::Dist::uniform) {
        return rng.next_unit();
    }
    const double x = cfg.logit_mu + cfg.logit_sigma * rng.next_gauss();
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

TimePair sample_time_pair(RngState& rng, const TimeSamplingConfig& cfg) {
    cfg.validate();
    if (rng.next_unit() < cfg.p_degenerate) {
        const double t = draw_time(rng, cfg);
        return TimePair(t, t);
    }
    double a = draw_time(rng, cfg);
    double b = draw_time(rng, cfg);
    while (a == b) {  // measure-zero tie; keep r < t strict
        b = draw_time(rng, cfg);
    }
    return a < b ? TimePair(a, b) : TimePair(b, a);
}

RealArray interpolate(const RealArray& x0, const RealArray& z1, const RealArray& t) {
    if (!x0.same_shape(z1)) {
        throw ShapeError("interpolate: x0 and z1 must match");
    }
    if (t.rows() != x0.rows() || t.cols() != 1) {
        throw ShapeError("interpolate: t must be n x 1");
    }
    RealArray out(x0.rows(), x0.cols());
    for (std::size_t i = 0; i < x0.rows(); ++i) {
        const double ti = t(i, 0);
        if (!(ti >= 0.0 && ti <= 1.0)) {
            throw DomainError("interpolate: t outside [0,1] at row " + std::to_string(i));
        }
        for (std::size_t j = 0; j < x0.cols(); ++j) {
            out(i, j) = (1.0 - ti) * x0(i, j) + ti * z1(i, j);
        }
    }
    return out;
}

RealArray interpolate(const RealArray& x0, const RealArray& z1, double t) {
    RealArray tcol(x0.rows(), 1, t);
    return interpolate(x0, z1, tcol);
}

PathSample make_path_sample(const RealArray& x0, const RealArray& z1, const RealArray& c,
                            TimePair times) {
    if (x0.rows() != 1 || z1.rows() != 1 || c.rows() != 1) {
        throw ShapeError("make_path_sample: expects single-row arrays");
    }
    PathSample s;
    s.x0 = x0;
    s.z1 = z1;
    s.c = c;
    s.times = times;
    s.z_t = interpolate(x0, z1, times.t);
    s.v_star = z1 - x0;
    return s;
}

PathBatch assemble_path_batch(const RealArray& x0, const RealArray& z1, const RealArray& c,
                              const RealArray& r, const RealArray& t) {
    if (!x0.same_shape(z1) || c.rows() != x0.rows()) {
        throw ShapeError("assemble_path_batch: row counts must match");
    }
    for (std::size_t i = 0; i < r.rows(); ++i) {
        TimePair check(r(i, 0), t(i, 0));  // validates 0 <= r <= t <= 1
        (void)check;
    }
    PathBatch batch;
    batch.x0 = x0;
    batch.z1 = z1;
    batch.c = c;
    batch.r = r;
    batch.t = t;
    batch.z_t = interpolate(x0, z1, t);
    batch.v_star = z1 - x0;
    return batch;
}

PathSample PathBatch::sample(std::size_t i) const {
    PathSample s;
    s.x0 = x0.row_copy(i);
    s.z1 = z1.row_copy(i);
    s.c = c.row_copy(i);
    s.times = TimePair(r(i, 0), t(i, 0));
    s.z_t = z_t.row_copy(i);
    s.v_star = v_star.row_copy(i);
    return s;
}

RealArray meanflow_target(const RealArray& v, const RealArray& r, const RealArray& t,
                          const RealArray& du_dt) {
    if (!v.same_shape(du_dt)) {
        throw ShapeError("meanflow_target: v and du_dt must match");
    }
    if (r.rows() != v.rows() || t.rows() != v.rows()) {
        throw ShapeError("meanflow_target: time columns must match batch");
    }
    RealArray out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        const double gap = t(i, 0) - r(i, 0);
        for (std::size_t j = 0; j < v.cols(); ++j) {
            out(i, j) = v(i, j) - gap * du_dt(i, j);
        }
    }
    return out;
}

namespace {

struct LossEval {
    double loss = 0.0;
    RealArray residual;  // u - u_tgt
    net::ForwardTrace trace;
};

LossEval eval_unified(const net::NetworkParams& params, const PathBatch& batch) {
    if (batch.size() == 0) {
        throw DomainError("unified loss: empty batch");
    }
    net::InputTangent tangent{batch.v_star, 0.0, 1.0};
    net::JvpResult jvp = net::forward_jvp(params, batch.z_t, batch.r, batch.t, batch.c, tangent);
    RealArray target = meanflow_target(batch.v_star, batch.r, batch.t, jvp.du);

    LossEval eval;
    eval.residual = jvp.u - target;
    eval.trace = std::move(jvp.trace);
    eval.loss = sum_squares(eval.residual) /
                static_cast<double>(batch.size() * batch.x0.cols());
    return eval;
}

}  // namespace

double unified_loss(const net::NetworkParams& params, const PathBatch& batch) {
    return eval_unified(params, batch).loss;
}

double unified_loss_step(net::NetworkParams& params, const PathBatch& batch, net::AdamState& opt,
                         double lr_scale) {
    LossEval eval = eval_unified(params, batch);
    // d(mean ||u - u_tgt||^2)/du with u_tgt frozen.
    const double scale = 2.0 / static_cast<double>(batch.size() * batch.x0.cols());
    RealArray cotangent = scale * eval.residual;
    net::ParamGrads grads = net::backward(params, eval.trace, cotangent);
    net::adam_step(params, grads, opt, lr_scale);
    return eval.loss;
}

TrainLogWriter::TrainLogWriter(const std::filesystem::path& path,
                               const std::string& header_comment) {
    out_.open(path);
    if (!out_) {
        throw IoError("cannot open training log: " + path.string());
    }
    if (!header_comment.empty()) {
        out_ << "# " << header_comment << "\n";
    }
    out_ << "step,wall_ms,train_loss,val_loss_reflow_mode,val_loss_meanflow_mode,seed\n";
}

void TrainLogWriter::append(std::uint64_t step, double wall_ms, double train_loss,
                            double val_reflow, double val_meanflow, std::uint64_t seed) {
    out_ << step << "," << fmt_double(wall_ms) << "," << fmt_double(train_loss) << ","
         << fmt_double(val_reflow) << "," << fmt_double(val_meanflow) << "," << seed << "\n";
    out_.flush();
}

}  // namespace hf::flowcore
