#pragma once
#include <optional>
#include <vector>

#include "subpop/model.hpp"

namespace subpop {

/** Variational parameters of the factorized posterior
 *
 *     Q(rho)    = Gamma(a_rho, b_rho)
 *     Q(beta_i) = N(mu_beta_i, Lambda_beta_i^-1)
 *     Q(K, Lambda) = N(K | K0K, ((q0 + V) Lambda)^-1) Wish(Lambda | n0 + V, scale Lambda0L)
 *
 * plus the expectations derived from them.  Lambda0L_inv is the stored quantity;
 * Lambda0L is its explicit inverse.
 */
struct VbState {
    double a_rho = 0;
    double b_rho = 0;
    MatBatch mu_beta;     // V x (N-1) x 1
    MatBatch Lambda_beta; // V x (N-1) x (N-1)
    Vec K0K;
    Mat Lambda0L_inv;

    // Cached expectations, refreshed at the end of every sweep.
    MatBatch Sigma_beta; // Lambda_beta_i^-1
    MatBatch E_bbT;      // E[beta_i beta_i^T]
    Mat Lambda0L;
    Mat E_Lambda;
    Vec E_LambdaK;
    double E_rho = 0;

    Index V() const { return mu_beta.batch(); }
    Index dim() const { return K0K.size(); }
};

struct VbTraceRow {
    long iteration;
    double elbo;
    double delta_K0K;
    double delta_rho;
    double delta_Lambda;
};

using VbTrace = std::vector<VbTraceRow>;

struct VbStopping {
    long max_iter = 1000;
    double rel_tol = 1e-8;
    /// When false the ELBO is not evaluated and convergence uses `param_tol` on the
    /// largest relative parameter change.
    bool use_elbo = true;
    double param_tol = 1e-10;
};

struct VbFit {
    VbState state;
    VbTrace trace;
    long iterations = 0;
    bool converged = false;
};

VbState vb_init(const Dataset &ds, const HyperParams &hp);

/** One coordinate-ascent sweep, in order: E[beta beta^T], E[Lambda], E[Lambda K],
 * (a_rho, b_rho), (Lambda_beta_i, mu_beta_i), (K0K, Lambda0L_inv), then refresh the
 * cached expectations.  Returns the relative parameter deltas of the sweep.
 */
VbTraceRow vb_step(VbState &state, const Dataset &ds, const HyperParams &hp, Executor &exec = Executor::serial());

/** Closed-form evidence lower bound E_Q[ln P(r, beta, K, Lambda, rho)] - E_Q[ln Q].
 *
 * When n0 <= N - 2 the Wishart prior is improper and its normalizing constant is
 * dropped; the bound is then defined up to that constant.
 */
double vb_elbo(const VbState &state, const Dataset &ds, const HyperParams &hp, Executor &exec = Executor::serial());

VbFit vb_fit(const Dataset &ds, const HyperParams &hp, const VbStopping &stop = {}, Executor &exec = Executor::serial(),
             std::optional<VbState> start = std::nullopt);

/** Draws Lambda ~ Wish(n0 + V, scale Lambda0L), then K ~ N(K0K, ((q0 + V) Lambda)^-1)
 * with that Lambda, then rho ~ Gamma(a_rho, b_rho).
 */
ParamSamples vb_posterior_sample(RngStream &rng, const VbState &state, const HyperParams &hp, Index V,
                                 std::size_t n_samples);

} // namespace subpop
