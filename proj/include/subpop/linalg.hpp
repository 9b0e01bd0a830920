#pragma once
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "subpop/errors.hpp"
#include "subpop/parallel.hpp"

namespace subpop {

using Eigen::Index;

/// Largest per-item dimension supported by the batched kernels (stack-allocated items).
inline constexpr Index kMaxItemDim = 16;

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Small stack-allocated working matrix used inside per-item kernels.
template <class Scalar>
using SmallMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor, kMaxItemDim, kMaxItemDim>;
template <class Scalar>
using SmallVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxItemDim, 1>;

/** Contiguous storage for `batch` matrices of identical shape, row-major per item.
 *
 * A batch whose items have a single column doubles as a batch of vectors; `vec(i)`
 * views such an item as a column vector.
 */
template <class Scalar>
class MatBatchT {
    public:
        using RowMajorMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        using ItemMap = Eigen::Map<RowMajorMat>;
        using ConstItemMap = Eigen::Map<const RowMajorMat>;
        using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
        using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

        MatBatchT() = default;
        MatBatchT(Index batch, Index rows, Index cols, Scalar fill = Scalar(0))
            : batch_{batch}, rows_{rows}, cols_{cols},
              data_(checked_size(batch, rows, cols), fill) {}

        /// `batch` copies of `item`.
        template <class Derived>
        static MatBatchT replicate(Index batch, const Eigen::MatrixBase<Derived> &item) {
            MatBatchT out(batch, item.rows(), item.cols());
            for (Index i = 0; i < batch; ++i) out.item(i) = item;
            return out;
        }

        Index batch() const { return batch_; }
        Index rows() const { return rows_; }
        Index cols() const { return cols_; }
        Index item_size() const { return rows_ * cols_; }
        bool empty() const { return batch_ == 0; }

        ItemMap item(Index i) { return ItemMap(data_.data() + i * item_size(), rows_, cols_); }
        ConstItemMap item(Index i) const { return ConstItemMap(data_.data() + i * item_size(), rows_, cols_); }
        VecMap vec(Index i) { return VecMap(data_.data() + i * item_size(), item_size()); }
        ConstVecMap vec(Index i) const { return ConstVecMap(data_.data() + i * item_size(), item_size()); }

        std::span<Scalar> data() { return data_; }
        std::span<const Scalar> data() const { return data_; }

        bool all_finite() const {
            for (Scalar v : data_) {
                if (!std::isfinite(v)) return false;
            }
            return true;
        }

    private:
        static std::size_t checked_size(Index batch, Index rows, Index cols) {
            if (batch < 0 || rows < 0 || cols < 0) throw ShapeError("MatBatch: negative dimension");
            return static_cast<std::size_t>(batch * rows * cols);
        }

        Index batch_ = 0, rows_ = 0, cols_ = 0;
        std::vector<Scalar> data_;
};

using MatBatch = MatBatchT<double>;

/// Batched matrix inverses / factorizations may retry once with diagonal jitter.
enum class Jitter { None, Once };

namespace detail {

template <class Scalar>
Scalar jitter_amount(const SmallMat<Scalar> &a) {
    return Scalar(1e-10) * a.trace() / Scalar(a.rows());
}

template <class Scalar>
bool inverse_item(const SmallMat<Scalar> &a, SmallMat<Scalar> &out) {
    const Index n = a.rows();
    out.resize(n, n);
    if (n == 1) {
        if (!(std::abs(a(0, 0)) >= Scalar(1e-300))) return false;
        out(0, 0) = Scalar(1) / a(0, 0);
    } else if (n == 2) {
        Scalar det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        if (!(std::abs(det) >= Scalar(1e-300))) return false;
        out(0, 0) = a(1, 1) / det;
        out(0, 1) = -a(0, 1) / det;
        out(1, 0) = -a(1, 0) / det;
        out(1, 1) = a(0, 0) / det;
    } else if (n == 3) {
        Scalar c00 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
        Scalar c01 = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
        Scalar c02 = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
        Scalar det = a(0, 0) * c00 + a(0, 1) * c01 + a(0, 2) * c02;
        if (!(std::abs(det) >= Scalar(1e-300))) return false;
        out(0, 0) = c00 / det;
        out(1, 0) = c01 / det;
        out(2, 0) = c02 / det;
        out(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
        out(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
        out(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det;
        out(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
        out(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
        out(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
    } else {
        Eigen::PartialPivLU<SmallMat<Scalar>> lu(a);
        // PartialPivLU does not flag singularity; check the pivots directly.
        const auto &m = lu.matrixLU();
        Scalar maxpiv = 0, minpiv = std::abs(m(0, 0));
        for (Index k = 0; k < n; ++k) {
            maxpiv = std::max(maxpiv, std::abs(m(k, k)));
            minpiv = std::min(minpiv, std::abs(m(k, k)));
        }
        if (!(minpiv > maxpiv * Scalar(1e-14))) return false;
        out = lu.inverse();
    }
    return out.allFinite();
}

/// Returns -1 on success, or the index of the failing pivot.
template <class Scalar>
long cholesky_item(const SmallMat<Scalar> &a, SmallMat<Scalar> &l) {
    const Index n = a.rows();
    l.setZero(n, n);
    for (Index j = 0; j < n; ++j) {
        Scalar d = a(j, j);
        for (Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > Scalar(0)) || !std::isfinite(d)) return static_cast<long>(j);
        l(j, j) = std::sqrt(d);
        for (Index i = j + 1; i < n; ++i) {
            Scalar s = a(i, j);
            for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return -1;
}

inline void check_item_dim(Index rows, Index cols, const char *op) {
    if (rows > kMaxItemDim || cols > kMaxItemDim) {
        throw ShapeError(std::string(op) + ": item dimension exceeds " + std::to_string(kMaxItemDim));
    }
}

} // namespace detail

/** Inverse of a single small square matrix: closed form for 1x1..3x3, LU with partial
 * pivoting above.  Throws NumericError when the matrix is singular (|det| < 1e-300);
 * with Jitter::Once, retries once after adding 1e-10 * trace / dim to the diagonal.
 */
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
inverse_small(const Eigen::MatrixBase<Derived> &a, Jitter jitter = Jitter::None) {
    using Scalar = typename Derived::Scalar;
    if (a.rows() != a.cols()) throw ShapeError("inverse_small: matrix is not square");
    detail::check_item_dim(a.rows(), a.cols(), "inverse_small");
    if (!a.allFinite()) throw NumericError("inverse_small: non-finite input");
    SmallMat<Scalar> in = a, out;
    if (detail::inverse_item(in, out)) return out;
    if (jitter == Jitter::Once) {
        in.diagonal().array() += detail::jitter_amount(in);
        if (detail::inverse_item(in, out)) return out;
    }
    throw NumericError("inverse_small: singular matrix");
}

/// Lower Cholesky factor of a single SPD matrix; the strict upper triangle is exactly zero.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
cholesky_small(const Eigen::MatrixBase<Derived> &a, Jitter jitter = Jitter::None) {
    using Scalar = typename Derived::Scalar;
    if (a.rows() != a.cols()) throw ShapeError("cholesky_small: matrix is not square");
    detail::check_item_dim(a.rows(), a.cols(), "cholesky_small");
    if (!a.allFinite()) throw NumericError("cholesky_small: non-finite input");
    SmallMat<Scalar> in = a, l;
    long piv = detail::cholesky_item(in, l);
    if (piv >= 0 && jitter == Jitter::Once) {
        in.diagonal().array() += detail::jitter_amount(in);
        piv = detail::cholesky_item(in, l);
    }
    if (piv >= 0) throw NumericError("cholesky_small: matrix not positive definite at pivot " + std::to_string(piv));
    return l;
}

/** C_i <- alpha * op(A_i) * op(B_i) + beta * C_i for every batch index i.
 *
 * A or B may hold a single item, which is then broadcast logically across the batch.
 * When `beta == 0` the prior contents of C are ignored and C is (re)shaped as needed.
 */
template <class Scalar>
void gemm_batched(const MatBatchT<Scalar> &a, const MatBatchT<Scalar> &b, bool trans_a, bool trans_b,
                  Scalar alpha, Scalar beta, MatBatchT<Scalar> &c, Executor &exec = Executor::serial()) {
    const Index batch = std::max(a.batch(), b.batch());
    if ((a.batch() != batch && a.batch() != 1) || (b.batch() != batch && b.batch() != 1)) {
        throw ShapeError("gemm_batched: batch counts differ");
    }
    const Index m = trans_a ? a.cols() : a.rows();
    const Index k = trans_a ? a.rows() : a.cols();
    const Index kb = trans_b ? b.cols() : b.rows();
    const Index n = trans_b ? b.rows() : b.cols();
    if (k != kb) throw ShapeError("gemm_batched: inner dimensions differ");
    if (beta == Scalar(0)) {
        if (c.batch() != batch || c.rows() != m || c.cols() != n) c = MatBatchT<Scalar>(batch, m, n);
    } else if (c.batch() != batch || c.rows() != m || c.cols() != n) {
        throw ShapeError("gemm_batched: output shape mismatch");
    }
    if (!a.all_finite() || !b.all_finite()) throw NumericError("gemm_batched: non-finite input");
    exec.for_range(static_cast<std::size_t>(batch), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            auto ai = a.item(a.batch() == 1 ? 0 : i);
            auto bi = b.item(b.batch() == 1 ? 0 : i);
            auto ci = c.item(i);
            for (Index r = 0; r < m; ++r) {
                for (Index col = 0; col < n; ++col) {
                    Scalar acc = 0;
                    for (Index q = 0; q < k; ++q) {
                        acc += (trans_a ? ai(q, r) : ai(r, q)) * (trans_b ? bi(col, q) : bi(q, col));
                    }
                    ci(r, col) = beta == Scalar(0) ? alpha * acc : alpha * acc + beta * ci(r, col);
                }
            }
        }
    });
}

/** Per-item inverses.  Throws BatchItemError carrying the lowest failing batch index. */
template <class Scalar>
MatBatchT<Scalar> inverse_batched(const MatBatchT<Scalar> &a, Executor &exec = Executor::serial(),
                                  Jitter jitter = Jitter::None) {
    if (a.rows() != a.cols()) throw ShapeError("inverse_batched: items are not square");
    detail::check_item_dim(a.rows(), a.cols(), "inverse_batched");
    if (!a.all_finite()) throw NumericError("inverse_batched: non-finite input");
    MatBatchT<Scalar> out(a.batch(), a.rows(), a.cols());
    const std::size_t none = static_cast<std::size_t>(-1);
    std::size_t failed = exec.reduce(
        static_cast<std::size_t>(a.batch()), none,
        [&](std::size_t lo, std::size_t hi) {
            SmallMat<Scalar> in, inv;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                in = a.item(i);
                bool ok = detail::inverse_item(in, inv);
                if (!ok && jitter == Jitter::Once) {
                    in.diagonal().array() += detail::jitter_amount(in);
                    ok = detail::inverse_item(in, inv);
                }
                if (!ok) return s;
                out.item(i) = inv;
            }
            return none;
        },
        [](std::size_t x, std::size_t y) { return std::min(x, y); });
    if (failed != none) throw BatchItemError("inverse_batched: singular item", failed);
    return out;
}

/** Per-item lower Cholesky factors (upper entries exactly zero).  Throws BatchItemError
 * with the lowest failing batch index and its failing pivot.
 */
template <class Scalar>
MatBatchT<Scalar> cholesky_batched(const MatBatchT<Scalar> &a, Executor &exec = Executor::serial(),
                                   Jitter jitter = Jitter::None) {
    if (a.rows() != a.cols()) throw ShapeError("cholesky_batched: items are not square");
    detail::check_item_dim(a.rows(), a.cols(), "cholesky_batched");
    if (!a.all_finite()) throw NumericError("cholesky_batched: non-finite input");
    MatBatchT<Scalar> out(a.batch(), a.rows(), a.cols());
    struct Failure {
        std::size_t index;
        long pivot;
    };
    const Failure none{static_cast<std::size_t>(-1), -1};
    Failure failed = exec.reduce(
        static_cast<std::size_t>(a.batch()), none,
        [&](std::size_t lo, std::size_t hi) {
            SmallMat<Scalar> in, l;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                in = a.item(i);
                long piv = detail::cholesky_item(in, l);
                if (piv >= 0 && jitter == Jitter::Once) {
                    in.diagonal().array() += detail::jitter_amount(in);
                    piv = detail::cholesky_item(in, l);
                }
                if (piv >= 0) return Failure{s, piv};
                out.item(i) = l;
            }
            return none;
        },
        [](Failure x, Failure y) { return x.index <= y.index ? x : y; });
    if (failed.pivot >= 0) throw BatchItemError("cholesky_batched: item not positive definite", failed.index, failed.pivot);
    return out;
}

/// Element-wise sum over the batch index.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> reduce_sum(const MatBatchT<Scalar> &items,
                                                                 Executor &exec = Executor::serial()) {
    using Out = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (items.empty()) throw EmptyInputError("reduce_sum: empty batch");
    return exec.reduce(
        static_cast<std::size_t>(items.batch()), Out(Out::Zero(items.rows(), items.cols())),
        [&](std::size_t lo, std::size_t hi) {
            Out acc = Out::Zero(items.rows(), items.cols());
            for (std::size_t s = lo; s < hi; ++s) acc += items.item(static_cast<Index>(s));
            return acc;
        },
        [](Out x, const Out &y) {
            x += y;
            return x;
        });
}

template <class Scalar>
Scalar reduce_sum(std::span<const Scalar> items, Executor &exec = Executor::serial()) {
    if (items.empty()) throw EmptyInputError("reduce_sum: empty sequence");
    return exec.reduce(
        items.size(), Scalar(0),
        [&](std::size_t lo, std::size_t hi) {
            Scalar acc = 0;
            for (std::size_t s = lo; s < hi; ++s) acc += items[s];
            return acc;
        },
        [](Scalar x, Scalar y) { return x + y; });
}

/** Inverse of an SPD matrix.  Positive-definiteness is checked with a Cholesky
 * factorization; with Jitter::Once a failed check is retried once after adding
 * 1e-10 * trace / dim to the diagonal, and the jittered matrix is inverted.
 */
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
inverse_spd(const Eigen::MatrixBase<Derived> &a, Jitter jitter = Jitter::None) {
    using Scalar = typename Derived::Scalar;
    if (a.rows() != a.cols()) throw ShapeError("inverse_spd: matrix is not square");
    detail::check_item_dim(a.rows(), a.cols(), "inverse_spd");
    if (!a.allFinite()) throw NumericError("inverse_spd: non-finite input");
    SmallMat<Scalar> in = a, l, out;
    long piv = detail::cholesky_item(in, l);
    if (piv >= 0 && jitter == Jitter::Once) {
        in.diagonal().array() += detail::jitter_amount(in);
        piv = detail::cholesky_item(in, l);
    }
    if (piv >= 0 || !detail::inverse_item(in, out)) throw NumericError("inverse_spd: matrix not positive definite");
    return ((out + out.transpose()) / Scalar(2)).eval();
}

/// log det of an SPD matrix via its Cholesky factor.
template <class Derived>
typename Derived::Scalar logdet_spd(const Eigen::MatrixBase<Derived> &a) {
    auto l = cholesky_small(a);
    return typename Derived::Scalar(2) * l.diagonal().array().log().sum();
}

/// (A + A^T) / 2
template <class Derived>
auto symmetrized(const Eigen::MatrixBase<Derived> &a) {
    return ((a + a.transpose()) / typename Derived::Scalar(2)).eval();
}

} // namespace subpop
