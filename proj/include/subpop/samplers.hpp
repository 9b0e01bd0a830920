#pragma once
#include <span>
#include <vector>

#include "subpop/linalg.hpp"
#include "subpop/rng.hpp"

namespace subpop {

/// Gamma distribution with shape `a` and rate (inverse scale) `b`.
struct GammaParams {
    double a;
    double b;
};

/// Wishart with integer degrees of freedom `dof` and scale matrix `scale`: E[W] = dof * scale.
struct WishartParams {
    long dof;
    Mat scale;
};

enum class MvnMatrix { Covariance, Precision };

/** Marsaglia-Tsang rejection sampler for Gamma(a, rate b).
 *
 * For a < 1 draws Gamma(a + 1) and multiplies by U^(1/a).
 */
double sample_gamma(RngStream &rng, const GammaParams &p);

/// mean + L u with L the lower Cholesky factor of the covariance.
Vec mvn_from_normals(const Eigen::Ref<const Vec> &mean, const Eigen::Ref<const Mat> &chol_cov,
                     const Eigen::Ref<const Vec> &u);

Vec sample_mvn(RngStream &rng, const Eigen::Ref<const Vec> &mean, const Eigen::Ref<const Mat> &matrix,
               MvnMatrix kind = MvnMatrix::Covariance);

/** Sum of `dof` outer products S_j S_j^T with S_j = R u_j, R the Cholesky factor of
 * the scale and u_j iid standard normal.
 */
Mat sample_wishart(RngStream &rng, const WishartParams &p);

/** Item i drawn from N(means_i, precisions_i^-1) with stream `streams[i]`.
 * Throws BatchItemError on a non-PD precision.
 */
MatBatch sample_mvn_batched(std::span<RngStream> streams, const MatBatch &means, const MatBatch &precisions,
                            Executor &exec = Executor::serial());

} // namespace subpop
