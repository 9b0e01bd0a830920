#include "subpop/vb.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "subpop/samplers.hpp"
#include "subpop/special.hpp"

namespace subpop {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double rel_change(const Eigen::Ref<const Mat> &now, const Eigen::Ref<const Mat> &before) {
    double scale = std::max(before.norm(), 1e-300);
    return (now - before).norm() / scale;
}

// E[beta_i beta_i^T] = mu mu^T + Sigma, batched.
void outer_plus(const MatBatch &mu, const MatBatch &sigma, MatBatch &out, Executor &exec) {
    gemm_batched(mu, mu, false, true, 1.0, 0.0, out, exec);
    exec.for_range(static_cast<std::size_t>(out.batch()), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            out.item(i) += sigma.item(i);
        }
    });
}

// Refreshes Lambda0L and the expectations that depend on Q(K, Lambda) and Q(rho).
void refresh_expectations(VbState &st, const HyperParams &hp) {
    const double nu = static_cast<double>(hp.n0 + st.V());
    st.Lambda0L = inverse_spd(st.Lambda0L_inv, Jitter::Once);
    st.E_Lambda = nu * st.Lambda0L;
    st.E_LambdaK = st.E_Lambda * st.K0K;
    st.E_rho = st.a_rho / st.b_rho;
}

} // namespace

VbState vb_init(const Dataset &ds, const HyperParams &hp) {
    ds.validate();
    hp.validate();
    if (hp.K0.size() != ds.dim()) throw ShapeError("vb_init: hyperparameters do not match the dataset dimension");
    VbState st;
    st.a_rho = hp.a0;
    st.b_rho = hp.b0;
    st.mu_beta = MatBatch::replicate(ds.V, hp.K0);
    st.Lambda_beta = MatBatch::replicate(ds.V, hp.Lambda0);
    st.K0K = hp.K0;
    st.Lambda0L_inv = inverse_spd(hp.Lambda0);
    st.Sigma_beta = inverse_batched(st.Lambda_beta);
    outer_plus(st.mu_beta, st.Sigma_beta, st.E_bbT, Executor::serial());
    refresh_expectations(st, hp);
    return st;
}

VbTraceRow vb_step(VbState &st, const Dataset &ds, const HyperParams &hp, Executor &exec) {
    const Index V = ds.V;
    const Index p = ds.dim();
    if (st.V() != V || st.dim() != p) throw ShapeError("vb_step: state does not match dataset");
    const Vec K0K_before = st.K0K;
    const double E_rho_before = st.E_rho;
    const Mat L0L_inv_before = st.Lambda0L_inv;

    // (1)-(3) E[beta beta^T], E[Lambda], E[Lambda K] are held in the cache from the
    // previous sweep (or vb_init).

    // (4) Q(rho).
    st.a_rho = hp.a0 + 0.5 * static_cast<double>(V);
    MatBatch dt_e, quad, dt_mu;
    gemm_batched(ds.D, st.E_bbT, true, false, 1.0, 0.0, dt_e, exec);
    gemm_batched(dt_e, ds.D, false, false, 1.0, 0.0, quad, exec);
    gemm_batched(ds.D, st.mu_beta, true, false, 1.0, 0.0, dt_mu, exec);
    double resid = exec.reduce(
        static_cast<std::size_t>(V), 0.0,
        [&](std::size_t lo, std::size_t hi) {
            double acc = 0;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                double e = ds.r(i) - ds.mu(i);
                acc += e * e - 2.0 * e * dt_mu.item(i)(0, 0) + quad.item(i)(0, 0);
            }
            return acc;
        },
        [](double a, double b) { return a + b; });
    st.b_rho = hp.b0 + 0.5 * resid;
    if (!(st.b_rho > 0) || !std::isfinite(st.b_rho)) throw NumericError("vb_step: b_rho is not positive");
    st.E_rho = st.a_rho / st.b_rho;

    // (5) Q(beta_i): Lambda_beta_i = E[Lambda] + E[rho] D_i D_i^T,
    // mu_beta_i = Lambda_beta_i^-1 (E[Lambda K] + E[rho] D_i (r_i - mu_i)).
    gemm_batched(ds.D, ds.D, false, true, st.E_rho, 0.0, st.Lambda_beta, exec);
    MatBatch rhs(V, p, 1);
    exec.for_range(static_cast<std::size_t>(V), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            st.Lambda_beta.item(i) += st.E_Lambda;
            rhs.vec(i) = st.E_LambdaK + (st.E_rho * (ds.r(i) - ds.mu(i))) * ds.D.vec(i);
        }
    });
    st.Sigma_beta = inverse_batched(st.Lambda_beta, exec, Jitter::Once);
    gemm_batched(st.Sigma_beta, rhs, false, false, 1.0, 0.0, st.mu_beta, exec);

    // (6) Q(K, Lambda).
    outer_plus(st.mu_beta, st.Sigma_beta, st.E_bbT, exec);
    const double c = hp.q0 + static_cast<double>(V);
    Vec sum_mu = reduce_sum(st.mu_beta, exec);
    Mat sum_bbT = reduce_sum(st.E_bbT, exec);
    st.K0K = (sum_mu + hp.q0 * hp.K0) / c;
    Mat l0l_inv = inverse_spd(hp.Lambda0) + sum_bbT + hp.q0 * hp.K0 * hp.K0.transpose() - c * st.K0K * st.K0K.transpose();
    st.Lambda0L_inv = symmetrized(l0l_inv);

    refresh_expectations(st, hp);
    return {0, 0.0, rel_change(st.K0K, K0K_before), std::abs(st.E_rho - E_rho_before) / std::abs(E_rho_before),
            rel_change(st.Lambda0L_inv, L0L_inv_before)};
}

double vb_elbo(const VbState &st, const Dataset &ds, const HyperParams &hp, Executor &exec) {
    const Index V = ds.V;
    const int p = static_cast<int>(ds.dim());
    const double nu = static_cast<double>(hp.n0 + V);
    const double c = hp.q0 + static_cast<double>(V);
    const double n0 = static_cast<double>(hp.n0);
    const Mat &W = st.Lambda0L;
    const double logdet_W = logdet_spd(W);
    const double e_logdet = multi_digamma(p, 0.5 * nu) + p * std::log(2.0) + logdet_W;
    const double a = st.a_rho, b = st.b_rho;
    const double e_rho = a / b;
    const double e_logrho = digamma(a) - std::log(b);
    const Mat e_lambda = nu * W;

    // Per-gene terms: likelihood, beta prior, beta entropy.
    double per_gene = exec.reduce(
        static_cast<std::size_t>(V), 0.0,
        [&](std::size_t lo, std::size_t hi) {
            double acc = 0;
            SmallMat<double> sig, lb, l;
            SmallVec<double> dev;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                auto d = ds.D.vec(i);
                auto mu = st.mu_beta.vec(i);
                sig = st.Sigma_beta.item(i);
                double e = ds.r(i) - ds.mu(i);
                double q = e * e - 2.0 * e * d.dot(mu) + d.dot(sig * d) + std::pow(d.dot(mu), 2);
                acc += 0.5 * e_logrho - 0.5 * kLog2Pi - 0.5 * e_rho * q;
                dev = mu - st.K0K;
                double tr = (e_lambda.array() * (sig + dev * dev.transpose()).array()).sum();
                acc += 0.5 * e_logdet - 0.5 * p * kLog2Pi - 0.5 * (tr + p / c);
                lb = st.Lambda_beta.item(i);
                if (detail::cholesky_item(lb, l) >= 0) throw BatchItemError("vb_elbo: Lambda_beta not positive definite", s);
                double logdet_lb = 2.0 * l.diagonal().array().log().sum();
                acc += 0.5 * p * (1.0 + kLog2Pi) - 0.5 * logdet_lb;
            }
            return acc;
        },
        [](double x, double y) { return x + y; });

    // K prior.
    Vec dk = st.K0K - hp.K0;
    double k_prior = 0.5 * p * std::log(hp.q0) + 0.5 * e_logdet - 0.5 * p * kLog2Pi -
                     0.5 * hp.q0 * (nu * dk.dot(W * dk) + p / c);

    // Lambda prior, Wish(n0, scale Lambda0).
    const Mat lambda0_inv = inverse_spd(hp.Lambda0);
    double lam_prior = 0.5 * (n0 - p - 1) * e_logdet - 0.5 * (lambda0_inv.array() * e_lambda.array()).sum() -
                       0.5 * n0 * logdet_spd(hp.Lambda0) - 0.5 * n0 * p * std::log(2.0);
    if (n0 > p - 1) lam_prior -= log_multigamma(p, 0.5 * n0);

    double rho_prior = hp.a0 * std::log(hp.b0) - std::lgamma(hp.a0) + (hp.a0 - 1) * e_logrho - hp.b0 * e_rho;

    double h_rho = a - std::log(b) + std::lgamma(a) + (1 - a) * digamma(a);

    double log_b_w = -0.5 * nu * logdet_W - 0.5 * nu * p * std::log(2.0) - log_multigamma(p, 0.5 * nu);
    double h_wish = -log_b_w - 0.5 * (nu - p - 1) * e_logdet + 0.5 * nu * p;
    double h_k = 0.5 * p * (1.0 + kLog2Pi) - 0.5 * p * std::log(c) - 0.5 * e_logdet;

    return per_gene + k_prior + lam_prior + rho_prior + h_rho + h_wish + h_k;
}

VbFit vb_fit(const Dataset &ds, const HyperParams &hp, const VbStopping &stop, Executor &exec,
             std::optional<VbState> start) {
    if (stop.max_iter < 1) throw ParameterError("vb_fit: max_iter must be >= 1");
    VbFit fit;
    fit.state = start ? std::move(*start) : vb_init(ds, hp);
    double prev = stop.use_elbo ? vb_elbo(fit.state, ds, hp, exec) : 0.0;
    for (long it = 1; it <= stop.max_iter; ++it) {
        VbTraceRow row;
        try {
            row = vb_step(fit.state, ds, hp, exec);
        } catch (const NumericError &e) {
            throw NumericError("vb iteration " + std::to_string(it) + ": " + e.what());
        }
        row.iteration = it;
        row.elbo = stop.use_elbo ? vb_elbo(fit.state, ds, hp, exec) : std::nan("");
        fit.trace.push_back(row);
        fit.iterations = it;
        bool done;
        if (stop.use_elbo) {
            done = std::abs(row.elbo - prev) < stop.rel_tol * std::abs(row.elbo);
            prev = row.elbo;
        } else {
            done = std::max({row.delta_K0K, row.delta_rho, row.delta_Lambda}) < stop.param_tol;
        }
        if (done) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

ParamSamples vb_posterior_sample(RngStream &rng, const VbState &st, const HyperParams &hp, Index V,
                                 std::size_t n_samples) {
    ParamSamples out;
    out.reserve(n_samples);
    const WishartParams wp{hp.n0 + static_cast<long>(V), st.Lambda0L};
    const double c = hp.q0 + static_cast<double>(V);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Mat lambda = sample_wishart(rng, wp);
        Vec k = sample_mvn(rng, st.K0K, c * lambda, MvnMatrix::Precision);
        double rho = sample_gamma(rng, {st.a_rho, st.b_rho});
        out.Lambda.push_back(std::move(lambda));
        out.K.push_back(std::move(k));
        out.rho.push_back(rho);
    }
    return out;
}

} // namespace subpop
