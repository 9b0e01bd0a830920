#pragma once
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subpop/model.hpp"

namespace subpop {

/** Gaussian-kernel density estimate.
 *
 * `samples` holds one draw per row (sorted lexicographically, so the estimate does
 * not depend on input order).  `bandwidth` is the kernel covariance H; in one
 * dimension H = h^2 for a scalar bandwidth h.
 */
struct KdeModel {
    Mat samples;
    Mat bandwidth;

    Index dim() const { return samples.cols(); }
    Index size() const { return samples.rows(); }
    /// Per-dimension kernel standard deviation sqrt(H_jj).
    Vec scales() const { return bandwidth.diagonal().cwiseSqrt(); }
};

/// Scott's rule: h_j = n^(-1/(d+4)) sigma_j.
Vec scott_bandwidth(const Mat &samples);

/// Multivariate fit; H defaults to diag(scott_bandwidth^2).
KdeModel kde_fit(const Mat &samples, std::optional<Mat> bandwidth = std::nullopt);
/// One-dimensional fit; `h` is the kernel standard deviation.
KdeModel kde_fit(std::span<const double> samples, std::optional<double> h = std::nullopt);

double kde_evaluate(const KdeModel &model, const Eigen::Ref<const Vec> &x);

struct DensityGrid {
    std::vector<double> x;
    std::vector<double> density;
    double argmax = 0; // grid point with the largest density
};

/// Tensor grid per dimension: `points` nodes over [min - pad h, max + pad h].
struct GridSpec {
    Index points = 257;
    double pad = 4.0;
};

/// Density of a one-dimensional model on an evenly spaced grid.
DensityGrid density_grid(const KdeModel &model, const GridSpec &spec = {}, Executor &exec = Executor::serial());

double trapezoid(const DensityGrid &grid);

struct ModeResult {
    Vec mode;
    double density = 0;
    bool multimodal = false;
};

/** Grid argmax (at least 256 nodes per dimension) refined by three golden-section
 * iterations per dimension inside the neighbouring cells.  When separate grid nodes tie
 * within 1e-12 of the maximum the lowest-coordinate one is used and `multimodal` is set.
 */
ModeResult kde_mode(const KdeModel &model, const GridSpec &spec = {}, Executor &exec = Executor::serial());

struct MarginalSummary {
    std::string name;
    double mode = 0;
    double mean = 0;
    double lower = 0; // 2.5% quantile
    double upper = 0; // 97.5% quantile
    bool multimodal = false;
    bool constant = false;
};

struct PosteriorSummary {
    std::vector<MarginalSummary> marginals; // K_1..K_{N-1}, K_N, rho, Lambda_rc (r <= c)
    Vec full_weights_mode;                  // (mode K_1, ..., mode K_N)
    Vec full_weights_mean;

    const MarginalSummary &get(const std::string &name) const;
};

struct SummaryOptions {
    double bandwidth_factor = 1.0; // multiplies Scott's bandwidth
    GridSpec grid;
};

/// Named one-dimensional series of every summarized parameter, in summary order.
std::vector<std::pair<std::string, std::vector<double>>> marginal_series(const ParamSamples &samples);

/// Marginal summary of one series: constant series skip the KDE and report the value.
MarginalSummary summarize_series(const std::string &name, std::span<const double> values,
                                 const SummaryOptions &opts = {}, Executor &exec = Executor::serial());

/** Per-parameter mode, mean and central 95% interval from at least 100 draws.  The K_N
 * marginal is built from 1 - sum(K) per draw before the KDE.
 */
PosteriorSummary summarize(const ParamSamples &samples, const SummaryOptions &opts = {},
                           Executor &exec = Executor::serial());

/// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::span<const double> values, double q);

} // namespace subpop
