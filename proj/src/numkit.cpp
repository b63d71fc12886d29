#include "hf/numkit.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace hf {

namespace {

void check_same_shape(const RealArray& a, const RealArray& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

}  // namespace

RealArray::RealArray(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("RealArray: rows and cols must be >= 1");
    }
}

RealArray RealArray::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0 || rows.begin()->size() == 0) {
        throw ShapeError("from_rows: empty literal");
    }
    RealArray out(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& r : rows) {
        if (r.size() != out.cols_) {
            throw ShapeError("from_rows: ragged rows");
        }
        std::size_t j = 0;
        for (double v : r) {
            out(i, j++) = v;
        }
        ++i;
    }
    return out;
}

RealArray RealArray::column(std::initializer_list<double> values) {
    if (values.size() == 0) {
        throw ShapeError("column: empty literal");
    }
    RealArray out(values.size(), 1);
    std::size_t i = 0;
    for (double v : values) {
        out(i++, 0) = v;
    }
    return out;
}

RealArray RealArray::row_copy(std::size_t i) const {
    RealArray out(1, cols_);
    for (std::size_t j = 0; j < cols_; ++j) {
        out(0, j) = (*this)(i, j);
    }
    return out;
}

void RealArray::set_row(std::size_t i, const RealArray& r) {
    if (r.size() != cols_) {
        throw ShapeError("set_row: length mismatch");
    }
    for (std::size_t j = 0; j < cols_; ++j) {
        (*this)(i, j) = r.data()[j];
    }
}

bool RealArray::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

RealArray operator+(const RealArray& a, const RealArray& b) {
    check_same_shape(a, b, "add");
    RealArray out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

RealArray operator-(const RealArray& a, const RealArray& b) {
    check_same_shape(a, b, "sub");
    RealArray out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] -= b.data()[i];
    }
    return out;
}

RealArray operator*(double s, const RealArray& a) {
    RealArray out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= s;
    }
    return out;
}

RealArray hadamard(const RealArray& a, const RealArray& b) {
    check_same_shape(a, b, "hadamard");
    RealArray out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= b.data()[i];
    }
    return out;
}

void axpy(RealArray& a, double s, const RealArray& b) {
    check_same_shape(a, b, "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data()[i] += s * b.data()[i];
    }
}

RealArray scale_rows(const RealArray& scale, const RealArray& a) {
    if (scale.rows() != a.rows() || scale.cols() != 1) {
        throw ShapeError("scale_rows: scale must be n x 1 matching a's rows");
    }
    RealArray out = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double s = scale(i, 0);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) *= s;
        }
    }
    return out;
}

namespace {

// C = A * B over row-major buffers. Column blocks accumulate in registers, so
// each C element is written once; the k accumulation order is fixed.
void matmul_kernel(double* __restrict cd, const double* __restrict ad,
                   const double* __restrict bd, std::size_t n, std::size_t k, std::size_t m) {
    constexpr std::size_t kBlock = 16;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = ad + i * k;
        double* ci = cd + i * m;
        std::size_t j0 = 0;
        for (; j0 + kBlock <= m; j0 += kBlock) {
            double acc[kBlock] = {};
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ai[p];
                const double* bp = bd + p * m + j0;
                for (std::size_t j = 0; j < kBlock; ++j) {
                    acc[j] += av * bp[j];
                }
            }
            for (std::size_t j = 0; j < kBlock; ++j) {
                ci[j0 + j] = acc[j];
            }
        }
        for (std::size_t j = j0; j < m; ++j) {
            ci[j] = 0.0;
        }
        for (std::size_t p = 0; p < k && j0 < m; ++p) {
            const double av = ai[p];
            const double* bp = bd + p * m;
            for (std::size_t j = j0; j < m; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

RealArray transposed(const RealArray& a) {
    RealArray t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

}  // namespace

RealArray matmul(const RealArray& a, const RealArray& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ");
    }
    RealArray c(a.rows(), b.cols());
    matmul_kernel(c.data(), a.data(), b.data(), a.rows(), a.cols(), b.cols());
    return c;
}

RealArray matmul_tn(const RealArray& a, const RealArray& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ");
    }
    const RealArray at = transposed(a);
    RealArray c(a.cols(), b.cols());
    matmul_kernel(c.data(), at.data(), b.data(), at.rows(), at.cols(), b.cols());
    return c;
}

RealArray matmul_nt(const RealArray& a, const RealArray& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column counts differ");
    }
    const RealArray bt = transposed(b);
    RealArray c(a.rows(), b.rows());
    matmul_kernel(c.data(), a.data(), bt.data(), a.rows(), a.cols(), bt.cols());
    return c;
}

double sum(const RealArray& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a.data()[i];
    }
    return acc;
}

double sum_squares(const RealArray& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a.data()[i] * a.data()[i];
    }
    return acc;
}

RealArray col_sums(const RealArray& a) {
    RealArray out(1, a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(0, j) += a(i, j);
        }
    }
    return out;
}

RealArray row_norms(const RealArray& a) {
    RealArray out(a.rows(), 1, 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            acc += a(i, j) * a(i, j);
        }
        out(i, 0) = std::sqrt(acc);
    }
    return out;
}

std::pair<RealArray, RealArray> mean_var(const RealArray& a) {
    if (a.rows() < 2) {
        throw DomainError("mean_var: variance needs at least 2 rows");
    }
    const double n = static_cast<double>(a.rows());
    RealArray mean = col_sums(a);
    for (std::size_t j = 0; j < mean.cols(); ++j) {
        mean(0, j) /= n;
    }
    RealArray var(1, a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - mean(0, j);
            var(0, j) += d * d;
        }
    }
    for (std::size_t j = 0; j < var.cols(); ++j) {
        var(0, j) /= (n - 1.0);
    }
    return {std::move(mean), std::move(var)};
}

RealArray col_covariance(const RealArray& a, const RealArray& b) {
    check_same_shape(a, b, "col_covariance");
    if (a.rows() < 2) {
        throw DomainError("col_covariance: needs at least 2 rows");
    }
    const double n = static_cast<double>(a.rows());
    RealArray mean_a = col_sums(a);
    RealArray mean_b = col_sums(b);
    for (std::size_t j = 0; j < a.cols(); ++j) {
        mean_a(0, j) /= n;
        mean_b(0, j) /= n;
    }
    RealArray cov(1, a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            cov(0, j) += (a(i, j) - mean_a(0, j)) * (b(i, j) - mean_b(0, j));
        }
    }
    for (std::size_t j = 0; j < a.cols(); ++j) {
        cov(0, j) /= (n - 1.0);
    }
    return cov;
}

RealArray concat_cols(const std::vector<const RealArray*>& blocks) {
    if (blocks.empty()) {
        throw ShapeError("concat_cols: no blocks");
    }
    const std::size_t n = blocks.front()->rows();
    std::size_t total = 0;
    for (const RealArray* b : blocks) {
        if (b->rows() != n) {
            throw ShapeError("concat_cols: row counts differ");
        }
        total += b->cols();
    }
    RealArray out(n, total);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (const RealArray* b : blocks) {
            for (std::size_t j = 0; j < b->cols(); ++j) {
                out(i, off + j) = (*b)(i, j);
            }
            off += b->cols();
        }
    }
    return out;
}

// splitmix64 finalizer; the counter indexes draws directly, so the state is
// the two public fields and nothing else.
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngState::next_u64() {
    counter += 1;
    return mix64(seed + counter * kGamma);
}

double RngState::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_unit_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngState::next_gauss() {
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngState RngState::split(std::uint64_t stream) const {
    RngState out;
    out.seed = mix64(seed + (stream + 1) * kGamma);
    out.counter = 0;
    return out;
}

RealArray gauss(RngState& rng, std::size_t n, std::size_t d) {
    if (n < 1 || d < 1) {
        throw DomainError("gauss: n and d must be >= 1");
    }
    RealArray out(n, d);
    double* p = out.data();
    const std::size_t total = n * d;
    std::size_t i = 0;
    while (i + 1 < total) {
        const double u1 = rng.next_unit_pos();
        const double u2 = rng.next_unit();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        p[i++] = rad * std::cos(ang);
        p[i++] = rad * std::sin(ang);
    }
    if (i < total) {
        p[i] = rng.next_gauss();
    }
    return out;
}

RealArray uniform(RngState& rng, std::size_t n, std::size_t d, double lo, double hi) {
    if (n < 1 || d < 1) {
        throw DomainError("uniform: n and d must be >= 1");
    }
    if (!(lo < hi)) {
        throw DomainError("uniform: need lo < hi");
    }
    RealArray out(n, d);
    for (std::size_t i = 0; i < n * d; ++i) {
        out.data()[i] = lo + (hi - lo) * rng.next_unit();
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    return std::string(buf, ptr);
}

}  // namespace hf
