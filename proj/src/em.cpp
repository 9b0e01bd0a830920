#include "subpop/em.hpp"

#include <cmath>
#include <string>

namespace subpop {

EmState em_expect(const ModelParams &params, const Dataset &ds, Executor &exec) {
    ds.validate();
    if (params.K.size() != ds.dim() || params.Lambda.rows() != ds.dim()) throw ShapeError("em: parameter dimension mismatch");
    if (!(params.rho >= 0) || !std::isfinite(params.rho)) throw ParameterError("em: rho must be non-negative");
    const Index V = ds.V;
    const Index p = ds.dim();
    EmState st;
    st.params = params;

    MatBatch prec;
    gemm_batched(ds.D, ds.D, false, true, params.rho, 0.0, prec, exec);
    const Vec lk = params.Lambda * params.K;
    MatBatch rhs(V, p, 1);
    exec.for_range(static_cast<std::size_t>(V), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            prec.item(i) += params.Lambda;
            rhs.vec(i) = lk + (params.rho * (ds.r(i) - ds.mu(i))) * ds.D.vec(i);
        }
    });
    st.Sigma = inverse_batched(prec, exec, Jitter::Once);
    gemm_batched(st.Sigma, rhs, false, false, 1.0, 0.0, st.M, exec);

    // S_i = (r_i - mu_i)^2 - 2 (r_i - mu_i) D_i^T M_i + D_i^T (M_i M_i^T + Sigma_i) D_i
    MatBatch second;
    gemm_batched(st.M, st.M, false, true, 1.0, 0.0, second, exec);
    exec.for_range(static_cast<std::size_t>(V), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            second.item(i) += st.Sigma.item(i);
        }
    });
    MatBatch dt_second, quad, dt_m;
    gemm_batched(ds.D, second, true, false, 1.0, 0.0, dt_second, exec);
    gemm_batched(dt_second, ds.D, false, false, 1.0, 0.0, quad, exec);
    gemm_batched(ds.D, st.M, true, false, 1.0, 0.0, dt_m, exec);
    st.S.resize(static_cast<std::size_t>(V));
    for (Index i = 0; i < V; ++i) {
        double e = ds.r(i) - ds.mu(i);
        st.S[static_cast<std::size_t>(i)] = e * e - 2.0 * e * dt_m.item(i)(0, 0) + quad.item(i)(0, 0);
    }
    return st;
}

void em_step(EmState &state, const Dataset &ds, Executor &exec) {
    state = em_expect(state.params, ds, exec);
    const Index V = ds.V;
    const double v = static_cast<double>(V);

    double sum_s = reduce_sum(std::span<const double>(state.S), exec);
    if (!(sum_s > 0) || !std::isfinite(sum_s)) throw NumericError("em_step: sum of S_i is not positive");

    MatBatch second;
    gemm_batched(state.M, state.M, false, true, 1.0, 0.0, second, exec);
    exec.for_range(static_cast<std::size_t>(V), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            second.item(i) += state.Sigma.item(i);
        }
    });

    ModelParams next;
    next.rho = v / sum_s;
    next.K = reduce_sum(state.M, exec) / v;
    Mat cov = symmetrized(Mat(reduce_sum(second, exec) / v - next.K * next.K.transpose()));
    next.Lambda = inverse_spd(cov, Jitter::Once);
    state.params = std::move(next);
}

ModelParams em_default_init(const HyperParams &hp) {
    hp.validate();
    return {hp.K0, hp.Lambda0, hp.a0 / hp.b0};
}

EmFit em_fit(const Dataset &ds, const ModelParams &init, const EmStopping &stop, Executor &exec) {
    init.validate();
    if (stop.max_iter < 1) throw ParameterError("em_fit: max_iter must be >= 1");
    EmFit fit;
    EmState st;
    st.params = init;
    double prev = marginal_loglik(ds, init, exec);
    for (long it = 1; it <= stop.max_iter; ++it) {
        try {
            em_step(st, ds, exec);
        } catch (const NumericError &e) {
            throw NumericError("em iteration " + std::to_string(it) + ": " + e.what());
        }
        double ll = marginal_loglik(ds, st.params, exec);
        fit.trace.push_back({it, ll, st.params.K, st.params.rho});
        fit.iterations = it;
        bool done = std::abs(ll - prev) < stop.rel_tol * std::abs(ll);
        prev = ll;
        if (done) {
            fit.converged = true;
            break;
        }
    }
    fit.params = st.params;
    return fit;
}

} // namespace subpop
