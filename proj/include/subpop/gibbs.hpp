#pragma once
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "subpop/model.hpp"

namespace subpop {

/// Current draw of every unknown.
struct ChainState {
    Vec K;
    Mat Lambda;
    double rho = 1.0;
    MatBatch beta; // V x (N-1) x 1
};

enum class GibbsInit { PriorMean, Overdispersed };

struct GibbsConfig {
    long iterations = 10000;
    long burn_in = 2000;
    long thin = 1;
    std::uint64_t seed = 1;
    GibbsInit init = GibbsInit::PriorMean;

    void validate() const;
    /// floor((iterations - burn_in) / thin)
    long kept() const { return (iterations - burn_in) / thin; }
};

/** Random streams of one chain: one for the global blocks (Lambda, K, rho) and one
 * per gene for the beta_i draws.
 */
struct GibbsStreams {
    RngStream global;
    std::vector<RngStream> genes;

    /// Stream 0 is global; gene i uses stream `gene_stream_ids[i]` (default i + 1).
    GibbsStreams(std::uint64_t seed, Index V, std::span<const std::uint64_t> gene_stream_ids = {});
};

struct Chain {
    GibbsConfig config;
    std::vector<long> iteration; // 1-based sweep index of each kept draw
    ParamSamples samples;
    ParamSamples sweeps; // every sweep, burn-in included
};

ChainState gibbs_initial_state(const Dataset &ds, const HyperParams &hp, GibbsInit init, RngStream &rng);

/** One sweep of the full conditionals, in order:
 *  (1) Lambda ~ Wish(n0 + V + 1, scale Lambda_L^-1),
 *      Lambda_L = Lambda0^-1 + q0 (K - K0)(K - K0)^T + sum_i (beta_i - K)(beta_i - K)^T
 *  (2) K ~ N((q0 K0 + sum_i beta_i) / (q0 + V), ((q0 + V) Lambda)^-1)
 *  (3) beta_i ~ N(mu_beta_i, (Lambda + rho D_i D_i^T)^-1) for every i
 *  (4) rho ~ Gamma(a0 + V/2, b0 + 1/2 sum_i (r_i - mu_i - D_i^T beta_i)^2)
 */
void gibbs_step(GibbsStreams &rng, ChainState &state, const Dataset &ds, const HyperParams &hp,
                Executor &exec = Executor::serial());

/// Scale matrix of the Wishart full conditional, Lambda_L (before inversion).
Mat gibbs_lambda_rate(const ChainState &state, const HyperParams &hp, Executor &exec = Executor::serial());

struct GaussianConditional {
    Vec mean;
    Mat precision;
};

/// Full conditional of K given Lambda and the current betas (any count, including zero).
GaussianConditional gibbs_K_conditional(const ChainState &state, const HyperParams &hp,
                                        Executor &exec = Executor::serial());

/// Rate of the Gamma full conditional of rho.
double gibbs_rho_rate(const ChainState &state, const Dataset &ds, const HyperParams &hp,
                      Executor &exec = Executor::serial());

Chain gibbs_run(const Dataset &ds, const HyperParams &hp, const GibbsConfig &config, Executor &exec = Executor::serial(),
                std::span<const std::uint64_t> gene_stream_ids = {});

struct ParamDiagnostic {
    std::string name;
    double ess;
    double rhat; // NaN when undefined
    bool rhat_defined;
};

/// Effective sample size with Geyer's initial-positive-sequence truncation.
double effective_sample_size(std::span<const double> x);

/// Split-R-hat over the two halves of one chain; NaN for zero within-half variance.
double split_rhat(std::span<const double> x);

/// ESS and split-R-hat for every K component, rho and each upper-triangular Lambda entry.
std::vector<ParamDiagnostic> gibbs_diagnostics(const Chain &chain);

} // namespace subpop
