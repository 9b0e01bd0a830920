#include "subpop/samplers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace subpop {

namespace {

double marsaglia_tsang(RngStream &rng, double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double u = rng.uniform();
        double z = rng.normal();
        double v = 1.0 + c * z;
        v = v * v * v;
        if (v > 0.0 && std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
    }
}

} // namespace

double sample_gamma(RngStream &rng, const GammaParams &p) {
    if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b)) {
        throw ParameterError("sample_gamma: shape and rate must be positive and finite");
    }
    if (p.a >= 1.0) return marsaglia_tsang(rng, p.a) / p.b;
    double g = marsaglia_tsang(rng, p.a + 1.0);
    double x = g * std::pow(rng.uniform(), 1.0 / p.a);
    // U^(1/a) can underflow for tiny shapes; keep the draw strictly positive.
    if (!(x > 0.0)) x = std::numeric_limits<double>::min();
    return x / p.b;
}

Vec mvn_from_normals(const Eigen::Ref<const Vec> &mean, const Eigen::Ref<const Mat> &chol_cov,
                     const Eigen::Ref<const Vec> &u) {
    if (chol_cov.rows() != mean.size() || chol_cov.cols() != mean.size() || u.size() != mean.size()) {
        throw ShapeError("mvn_from_normals: dimension mismatch");
    }
    return mean + chol_cov.triangularView<Eigen::Lower>() * u;
}

Vec sample_mvn(RngStream &rng, const Eigen::Ref<const Vec> &mean, const Eigen::Ref<const Mat> &matrix,
               MvnMatrix kind) {
    if (matrix.rows() != mean.size() || matrix.cols() != mean.size()) throw ShapeError("sample_mvn: dimension mismatch");
    Mat cov = kind == MvnMatrix::Precision ? Mat(symmetrized(inverse_small(matrix))) : Mat(matrix);
    Mat l = cholesky_small(cov);
    Vec u(mean.size());
    for (Index j = 0; j < u.size(); ++j) u(j) = rng.normal();
    return mvn_from_normals(mean, l, u);
}

Mat sample_wishart(RngStream &rng, const WishartParams &p) {
    const Index dim = p.scale.rows();
    if (p.scale.cols() != dim || dim == 0) throw ShapeError("sample_wishart: scale must be square");
    if (p.dof < dim) throw ParameterError("sample_wishart: dof must be an integer >= dimension");
    Mat r = cholesky_small(p.scale);
    SmallMat<double> acc = SmallMat<double>::Zero(dim, dim);
    SmallVec<double> u(dim), s(dim);
    for (long j = 0; j < p.dof; ++j) {
        for (Index k = 0; k < dim; ++k) u(k) = rng.normal();
        s.noalias() = r.triangularView<Eigen::Lower>() * u;
        acc.noalias() += s * s.transpose();
    }
    Mat out = acc;
    return symmetrized(out);
}

MatBatch sample_mvn_batched(std::span<RngStream> streams, const MatBatch &means, const MatBatch &precisions,
                            Executor &exec) {
    const Index batch = means.batch();
    const Index dim = means.rows();
    if (means.cols() != 1 || precisions.batch() != batch || precisions.rows() != dim || precisions.cols() != dim ||
        static_cast<Index>(streams.size()) != batch) {
        throw ShapeError("sample_mvn_batched: shape mismatch");
    }
    detail::check_item_dim(dim, dim, "sample_mvn_batched");
    MatBatch out(batch, dim, 1);
    const std::size_t none = static_cast<std::size_t>(-1);
    std::size_t failed = exec.reduce(
        static_cast<std::size_t>(batch), none,
        [&](std::size_t lo, std::size_t hi) {
            SmallMat<double> prec, cov, l;
            SmallVec<double> u(dim);
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                prec = precisions.item(i);
                if (!detail::inverse_item(prec, cov)) return s;
                cov = symmetrized(cov);
                if (detail::cholesky_item(cov, l) >= 0) return s;
                for (Index k = 0; k < dim; ++k) u(k) = streams[s].normal();
                out.vec(i) = means.vec(i) + l.triangularView<Eigen::Lower>() * u;
            }
            return none;
        },
        [](std::size_t x, std::size_t y) { return std::min(x, y); });
    if (failed != none) throw BatchItemError("sample_mvn_batched: precision not positive definite", failed);
    return out;
}

} // namespace subpop
