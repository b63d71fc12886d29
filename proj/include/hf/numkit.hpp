#pragma once

// Dense row-major 2-D arrays of doubles, a counter-based RNG, and the small
// set of array operations the rest of the library is built on. Everything is
// 64-bit and deterministic: a fixed (seed, counter) pair reproduces the same
// stream on every platform, and all reductions run in a fixed order.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hf/errors.hpp"

namespace hf {

class RealArray {
  public:
    RealArray() = default;
    RealArray(std::size_t rows, std::size_t cols, double fill = 0.0);

    static RealArray from_rows(std::initializer_list<std::initializer_list<double>> rows);
    /// n x 1 column built from a flat list.
    static RealArray column(std::initializer_list<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    /// Copy of row i as a 1 x cols array.
    RealArray row_copy(std::size_t i) const;
    void set_row(std::size_t i, const RealArray& r);

    bool all_finite() const;
    bool same_shape(const RealArray& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const RealArray& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// -- elementwise -------------------------------------------------------------

RealArray operator+(const RealArray& a, const RealArray& b);
RealArray operator-(const RealArray& a, const RealArray& b);
RealArray operator*(double s, const RealArray& a);
RealArray hadamard(const RealArray& a, const RealArray& b);
/// a += s * b
void axpy(RealArray& a, double s, const RealArray& b);
/// Per-row scaling: out(i,j) = scale(i,0) * a(i,j).
RealArray scale_rows(const RealArray& scale, const RealArray& a);

// -- products ----------------------------------------------------------------

/// C = A (n x k) * B (k x m). Fixed accumulation order in k.
RealArray matmul(const RealArray& a, const RealArray& b);
/// C = A^T (k x n)^T * B (n x m), i.e. C(k x m) = sum_n A(n,i) B(n,j).
RealArray matmul_tn(const RealArray& a, const RealArray& b);
/// C = A (n x k) * B^T (m x k)^T, i.e. C(n x m) = <A.row(i), B.row(j)>.
RealArray matmul_nt(const RealArray& a, const RealArray& b);

// -- reductions (all fixed-order) ---------------------------------------------

double sum(const RealArray& a);
double sum_squares(const RealArray& a);
/// 1 x cols array of column sums.
RealArray col_sums(const RealArray& a);
/// n x 1 array of per-row Euclidean norms.
RealArray row_norms(const RealArray& a);

/// Per-column sample mean and unbiased (n-1) variance over rows.
/// Throws DomainError when rows < 2 (variance undefined).
std::pair<RealArray, RealArray> mean_var(const RealArray& a);

/// Per-column unbiased sample covariance between paired rows of a and b.
RealArray col_covariance(const RealArray& a, const RealArray& b);

/// Concatenate blocks left-to-right; all blocks must share the row count.
RealArray concat_cols(const std::vector<const RealArray*>& blocks);

// -- rng ----------------------------------------------------------------------

/// Counter-based generator: draw i is a fixed 64-bit permutation (splitmix64
/// finalizer) of seed + (counter + i) * golden gamma. State is exactly the
/// (seed, counter) pair, so streams are trivially reproducible and splittable.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    RngState() = default;
    explicit RngState(std::uint64_t s) : seed(s) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_unit();
    /// Uniform in (0, 1] (safe for log()).
    double next_unit_pos();
    /// One standard normal draw (Box-Muller, cosine branch; consumes 2 u64s).
    double next_gauss();

    /// Independent stream derived from (seed, stream id); counter starts at 0.
    RngState split(std::uint64_t stream) const;
};

/// n x d standard normal draws, filled row-major in Box-Muller pairs.
RealArray gauss(RngState& rng, std::size_t n, std::size_t d);
/// n x d uniform draws in [lo, hi).
RealArray uniform(RngState& rng, std::size_t n, std::size_t d, double lo = 0.0, double hi = 1.0);

// -- formatting ----------------------------------------------------------------

/// Shortest decimal string that round-trips the double (locale independent).
std::string fmt_double(double v);

}  // namespace hf
