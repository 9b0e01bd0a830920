#pragma once
#include <vector>

#include "subpop/model.hpp"

namespace subpop {

/// Current point estimate plus the E-step quantities computed from it.
struct EmState {
    ModelParams params;
    MatBatch Sigma; // Sigma_i = (Lambda + rho D_i D_i^T)^-1
    MatBatch M;     // M_i = Sigma_i (Lambda K + rho D_i (r_i - mu_i))
    std::vector<double> S;
};

struct EmStopping {
    long max_iter = 1000;
    double rel_tol = 1e-10;
};

struct EmTraceRow {
    long iteration;
    double loglik;
    Vec K;
    double rho;
};

struct EmFit {
    ModelParams params;
    std::vector<EmTraceRow> trace;
    long iterations = 0;
    bool converged = false;
};

/// E-step for `params` (fills Sigma, M, S) without updating the parameters.
EmState em_expect(const ModelParams &params, const Dataset &ds, Executor &exec = Executor::serial());

/** E-step on the current parameters followed by the M-step
 *
 *     rho     = V / sum_i S_i
 *     K       = sum_i M_i / V
 *     Lambda^-1 = sym(sum_i (M_i M_i^T + Sigma_i) / V - K K^T)
 *
 * On return `state.params` holds the updated parameters and the cache holds the
 * E-step that produced them.
 */
void em_step(EmState &state, const Dataset &ds, Executor &exec = Executor::serial());

/// Default starting point: K0, Lambda0, rho = a0 / b0.
ModelParams em_default_init(const HyperParams &hp);

/// Iterates em_step until the relative change of marginal_loglik drops below rel_tol.
EmFit em_fit(const Dataset &ds, const ModelParams &init, const EmStopping &stop = {},
             Executor &exec = Executor::serial());

} // namespace subpop
