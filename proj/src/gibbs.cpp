#include "subpop/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "subpop/samplers.hpp"

namespace subpop {

void GibbsConfig::validate() const {
    if (thin < 1) throw ParameterError("gibbs: thin must be >= 1");
    if (burn_in < 0) throw ParameterError("gibbs: burn_in must be >= 0");
    if (iterations <= burn_in) throw ParameterError("gibbs: iterations must exceed burn_in");
}

GibbsStreams::GibbsStreams(std::uint64_t seed, Index V, std::span<const std::uint64_t> gene_stream_ids)
    : global{seed, 0} {
    if (!gene_stream_ids.empty() && static_cast<Index>(gene_stream_ids.size()) != V) {
        throw ShapeError("GibbsStreams: one stream id per gene required");
    }
    genes.reserve(static_cast<std::size_t>(V));
    for (Index i = 0; i < V; ++i) {
        std::uint64_t id = gene_stream_ids.empty() ? static_cast<std::uint64_t>(i) + 1 : gene_stream_ids[i];
        genes.emplace_back(seed, id);
    }
}

ChainState gibbs_initial_state(const Dataset &ds, const HyperParams &hp, GibbsInit init, RngStream &rng) {
    ds.validate();
    hp.validate();
    if (hp.K0.size() != ds.dim()) throw ShapeError("gibbs: hyperparameters do not match the dataset dimension");
    ChainState st;
    if (init == GibbsInit::PriorMean) {
        st.K = hp.K0;
        st.Lambda = hp.Lambda0;
        st.rho = hp.a0 / hp.b0;
    } else {
        // Spread starts: K jittered by 0.5 per component, Lambda and rho scaled by a
        // log-uniform factor in [1/10, 10].
        st.K = hp.K0;
        for (Index k = 0; k < st.K.size(); ++k) st.K(k) += 0.5 * (2.0 * rng.uniform() - 1.0);
        st.Lambda = hp.Lambda0 * std::pow(10.0, 2.0 * rng.uniform() - 1.0);
        st.rho = hp.a0 / hp.b0 * std::pow(10.0, 2.0 * rng.uniform() - 1.0);
    }
    st.beta = MatBatch::replicate(ds.V, st.K);
    return st;
}

Mat gibbs_lambda_rate(const ChainState &st, const HyperParams &hp, Executor &exec) {
    MatBatch dev(st.beta.batch(), st.K.size(), 1);
    exec.for_range(static_cast<std::size_t>(dev.batch()), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            dev.vec(i) = st.beta.vec(i) - st.K;
        }
    });
    MatBatch outer;
    gemm_batched(dev, dev, false, true, 1.0, 0.0, outer, exec);
    Vec dk = st.K - hp.K0;
    Mat rate = inverse_spd(hp.Lambda0) + hp.q0 * dk * dk.transpose();
    if (!outer.empty()) rate += reduce_sum(outer, exec);
    return symmetrized(rate);
}

GaussianConditional gibbs_K_conditional(const ChainState &st, const HyperParams &hp, Executor &exec) {
    const double c = hp.q0 + static_cast<double>(st.beta.batch());
    Vec sum = hp.q0 * hp.K0;
    if (!st.beta.empty()) sum += reduce_sum(st.beta, exec);
    return {sum / c, c * st.Lambda};
}

double gibbs_rho_rate(const ChainState &st, const Dataset &ds, const HyperParams &hp, Executor &exec) {
    MatBatch fitted;
    gemm_batched(ds.D, st.beta, true, false, 1.0, 0.0, fitted, exec);
    double ss = exec.reduce(
        static_cast<std::size_t>(ds.V), 0.0,
        [&](std::size_t lo, std::size_t hi) {
            double acc = 0;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                double e = ds.r(i) - ds.mu(i) - fitted.item(i)(0, 0);
                acc += e * e;
            }
            return acc;
        },
        [](double a, double b) { return a + b; });
    return hp.b0 + 0.5 * ss;
}

void gibbs_step(GibbsStreams &rng, ChainState &st, const Dataset &ds, const HyperParams &hp, Executor &exec) {
    const Index V = ds.V;
    const Index p = ds.dim();
    if (st.beta.batch() != V || st.K.size() != p || static_cast<Index>(rng.genes.size()) != V) {
        throw ShapeError("gibbs_step: state does not match dataset");
    }

    // (1) Lambda | beta, K.
    Mat rate = gibbs_lambda_rate(st, hp, exec);
    st.Lambda = sample_wishart(rng.global, {hp.n0 + static_cast<long>(V) + 1, inverse_spd(rate, Jitter::Once)});

    // (2) K | Lambda, beta.
    GaussianConditional kc = gibbs_K_conditional(st, hp, exec);
    st.K = sample_mvn(rng.global, kc.mean, kc.precision, MvnMatrix::Precision);

    // (3) beta_i | K, Lambda, rho.
    MatBatch prec;
    gemm_batched(ds.D, ds.D, false, true, st.rho, 0.0, prec, exec);
    const Vec lk = st.Lambda * st.K;
    MatBatch rhs(V, p, 1);
    exec.for_range(static_cast<std::size_t>(V), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const Index i = static_cast<Index>(s);
            prec.item(i) += st.Lambda;
            rhs.vec(i) = lk + (st.rho * (ds.r(i) - ds.mu(i))) * ds.D.vec(i);
        }
    });
    MatBatch cov = inverse_batched(prec, exec, Jitter::Once);
    MatBatch means;
    gemm_batched(cov, rhs, false, false, 1.0, 0.0, means, exec);
    st.beta = sample_mvn_batched(rng.genes, means, prec, exec);

    // (4) rho | beta.
    double a = hp.a0 + 0.5 * static_cast<double>(V);
    st.rho = sample_gamma(rng.global, {a, gibbs_rho_rate(st, ds, hp, exec)});
}

Chain gibbs_run(const Dataset &ds, const HyperParams &hp, const GibbsConfig &config, Executor &exec,
                std::span<const std::uint64_t> gene_stream_ids) {
    config.validate();
    GibbsStreams rng(config.seed, ds.V, gene_stream_ids);
    ChainState st = gibbs_initial_state(ds, hp, config.init, rng.global);
    Chain chain;
    chain.config = config;
    chain.samples.reserve(static_cast<std::size_t>(config.kept()));
    chain.sweeps.reserve(static_cast<std::size_t>(config.iterations));
    for (long t = 1; t <= config.iterations; ++t) {
        try {
            gibbs_step(rng, st, ds, hp, exec);
        } catch (const NumericError &e) {
            throw NumericError("gibbs iteration " + std::to_string(t) + ": " + e.what());
        }
        chain.sweeps.K.push_back(st.K);
        chain.sweeps.Lambda.push_back(st.Lambda);
        chain.sweeps.rho.push_back(st.rho);
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
            chain.iteration.push_back(t);
            chain.samples.K.push_back(st.K);
            chain.samples.Lambda.push_back(st.Lambda);
            chain.samples.rho.push_back(st.rho);
        }
    }
    return chain;
}

double effective_sample_size(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) throw DiagnosticError("effective_sample_size: chain too short");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    auto autocov = [&](std::size_t lag) {
        double acc = 0;
        for (std::size_t t = 0; t + lag < n; ++t) acc += (x[t] - mean) * (x[t + lag] - mean);
        return acc / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (!(c0 > 0)) return std::nan("");
    // Geyer: sum consecutive pairs Gamma_k = rho_{2k} + rho_{2k+1} while positive,
    // enforcing monotone decrease.
    double sum = 0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = autocov(2 * k) / c0 + autocov(2 * k + 1) / c0;
        if (pair <= 0) break;
        pair = std::min(pair, prev_pair);
        sum += pair;
        prev_pair = pair;
    }
    double tau = 2.0 * sum - 1.0;
    return static_cast<double>(n) / std::max(tau, 1e-12);
}

double split_rhat(std::span<const double> x) {
    const std::size_t half = x.size() / 2;
    if (half < 2) throw DiagnosticError("split_rhat: chain too short");
    auto first = x.subspan(0, half);
    auto second = x.subspan(x.size() - half, half);
    auto stats = [](std::span<const double> s) {
        double m = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        auto [lo, hi] = std::minmax_element(s.begin(), s.end());
        if (*lo == *hi) return std::pair{*lo, 0.0};
        double v = 0;
        for (double y : s) v += (y - m) * (y - m);
        return std::pair{m, v / static_cast<double>(s.size() - 1)};
    };
    auto [m1, v1] = stats(first);
    auto [m2, v2] = stats(second);
    const double n = static_cast<double>(half);
    double w = 0.5 * (v1 + v2);
    if (!(w > 0)) return std::nan("");
    double grand = 0.5 * (m1 + m2);
    double b = n * ((m1 - grand) * (m1 - grand) + (m2 - grand) * (m2 - grand));
    double var_plus = (n - 1) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

std::vector<ParamDiagnostic> gibbs_diagnostics(const Chain &chain) {
    const auto &s = chain.samples;
    if (s.size() < 100) throw DiagnosticError("gibbs_diagnostics: need at least 100 kept samples");
    std::vector<std::pair<std::string, std::vector<double>>> series;
    const Index p = s.K.front().size();
    for (Index k = 0; k < p; ++k) {
        std::vector<double> v;
        for (const auto &kk : s.K) v.push_back(kk(k));
        series.emplace_back("K" + std::to_string(k + 1), std::move(v));
    }
    series.emplace_back("rho", s.rho);
    for (Index r = 0; r < p; ++r) {
        for (Index c = r; c < p; ++c) {
            std::vector<double> v;
            for (const auto &l : s.Lambda) v.push_back(l(r, c));
            series.emplace_back("Lambda_" + std::to_string(r + 1) + std::to_string(c + 1), std::move(v));
        }
    }
    std::vector<ParamDiagnostic> out;
    for (auto &[name, v] : series) {
        double rh = split_rhat(v);
        out.push_back({name, effective_sample_size(v), rh, std::isfinite(rh)});
    }
    return out;
}

} // namespace subpop
