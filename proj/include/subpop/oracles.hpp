#pragma once
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subpop/boolnet.hpp"
#include "subpop/vb.hpp"

namespace subpop {

/// Compensated (Kahan-Babuska) serial sum.
double kahan_sum(std::span<const double> values);

/** Tensor-grid quadrature over (K, log Lambda, log rho) for a scalar-K instance
 * (N = 2).  Ranges are found automatically unless given, then widened until each
 * covers at least `min_sd` posterior standard deviations either side of the mean.
 */
struct QuadratureSpec {
    Index resolution = 200;
    double min_sd = 6.0;
    int max_widenings = 8;
    /// Optional fixed ranges {lo, hi} for K, log Lambda, log rho.
    std::optional<std::array<std::pair<double, double>, 3>> ranges;
};

struct QuadratureResult {
    double E_K = 0;
    double E_rho = 0;
    double E_Lambda = 0;
    double mean_log_lambda = 0, mean_log_rho = 0;
    double sd_K = 0, sd_log_lambda = 0, sd_log_rho = 0;
    double log_evidence = 0;
    std::array<std::pair<double, double>, 3> ranges{};
    Index resolution = 0;
};

/// Posterior means with beta integrated out analytically; V <= 5, N = 2.
QuadratureResult oracle_posterior_mean(const Dataset &ds, const HyperParams &hp, const QuadratureSpec &spec = {},
                                       Executor &exec = Executor::serial());

/// One draw of every unknown, laid out as in the model.
struct LatentDraw {
    double rho;
    MatBatch beta; // V x (N-1) x 1
    Vec K;
    Mat Lambda;
};

/// ln P(Z, D) - ln Q(Z) at one point, with independently written log densities.
double oracle_log_ratio(const LatentDraw &z, const VbState &state, const Dataset &ds, const HyperParams &hp);

struct McEstimate {
    double estimate = 0;
    double std_error = 0;
    std::size_t used = 0;
    std::size_t excluded = 0; // draws with a non-finite integrand
};

using LatentSampler = std::function<LatentDraw(RngStream &)>;

/** Monte Carlo estimate of E_Q[ln P(Z, D) - ln Q(Z)] from `draws` >= 10^4 draws of Q.
 * Draw j uses stream (seed, j), so the result depends only on the seed.  `sampler`
 * replaces the draw from Q (test hook).
 */
McEstimate oracle_mc_elbo(const VbState &state, const Dataset &ds, const HyperParams &hp, std::size_t draws,
                          std::uint64_t seed, Executor &exec = Executor::serial(),
                          std::optional<LatentSampler> sampler = std::nullopt);

/// Draw of Z from the fitted Q.
LatentDraw sample_q(RngStream &rng, const VbState &state, const HyperParams &hp);

/// Scalar-model marginal log-likelihood written out directly (N = 2).
double oracle_marginal_loglik_scalar(const Dataset &ds, double K, double Lambda, double rho);

/// Maximizer of the marginal likelihood for N = 2 by grid search and Nelder-Mead polish.
ModelParams oracle_ml_estimate(const Dataset &ds);

/// Node values by direct recursion from each output, with the same precedence rules
/// as evaluate(): fault, then drug, then gate.
std::map<std::string, bool> oracle_evaluate(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim);

/** Output bits for every assignment of the inputs (assignment k sets input j to bit j
 * of k).  Row k holds the outputs in net.outputs() order.
 */
std::vector<std::vector<bool>> oracle_truth_table(const BooleanNetwork &net, const FaultMap &fault,
                                                  const std::set<std::string> &drugs = {});

} // namespace subpop
