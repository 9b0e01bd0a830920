#include "subpop/oracles.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "subpop/samplers.hpp"

namespace subpop {

namespace {

const double kLn2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_gamma_pdf(double x, double a, double b) {
    if (!(x > 0)) return kNegInf;
    return a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(x) - b * x;
}

double log_normal_pdf(double x, double mean, double var) {
    double e = x - mean;
    return -0.5 * (kLn2Pi + std::log(var)) - 0.5 * e * e / var;
}

// log N(x | mean, precision^-1)
double log_mvn_prec(const Vec &x, const Vec &mean, const Mat &precision) {
    Eigen::LLT<Mat> llt(precision);
    if (llt.info() != Eigen::Success) return std::nan("");
    Mat l = llt.matrixL();
    double logdet = 2.0 * l.diagonal().array().log().sum();
    Vec e = x - mean;
    return 0.5 * logdet - 0.5 * static_cast<double>(x.size()) * kLn2Pi - 0.5 * e.dot(precision * e);
}

double log_multigamma_direct(int p, double a) {
    double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
    for (int j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1 - j));
    return out;
}

// Wishart(dof n, scale S) log density; the normalizer is left out when n <= p - 1.
double log_wishart_pdf(const Mat &X, double n, const Mat &S) {
    const int p = static_cast<int>(X.rows());
    Eigen::LLT<Mat> lx(X), ls(S);
    if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return std::nan("");
    Mat Lx = lx.matrixL(), Ls = ls.matrixL();
    double logdet_x = 2.0 * Lx.diagonal().array().log().sum();
    double logdet_s = 2.0 * Ls.diagonal().array().log().sum();
    double tr = ls.solve(X).trace();
    double out = 0.5 * (n - p - 1) * logdet_x - 0.5 * tr - 0.5 * n * p * std::log(2.0) - 0.5 * n * logdet_s;
    if (n > p - 1) out -= log_multigamma_direct(p, 0.5 * n);
    return out;
}

// Running moments in a log-scaled frame: sums are multiplied by exp(-shift).
struct Moments {
    double shift = kNegInf;
    double w = 0;
    std::array<double, 3> m1{}, m2{};
    double lam = 0, rho = 0;

    void rescale(double to) {
        if (shift == kNegInf) {
            shift = to;
            return;
        }
        double f = std::exp(shift - to);
        w *= f;
        lam *= f;
        rho *= f;
        for (int k = 0; k < 3; ++k) {
            m1[k] *= f;
            m2[k] *= f;
        }
        shift = to;
    }
};

Moments merge(Moments a, Moments b) {
    if (a.shift == kNegInf) return b;
    if (b.shift == kNegInf) return a;
    double to = std::max(a.shift, b.shift);
    a.rescale(to);
    b.rescale(to);
    a.w += b.w;
    a.lam += b.lam;
    a.rho += b.rho;
    for (int k = 0; k < 3; ++k) {
        a.m1[k] += b.m1[k];
        a.m2[k] += b.m2[k];
    }
    return a;
}

QuadratureResult quadrature_pass(const Dataset &ds, const HyperParams &hp,
                                 const std::array<std::pair<double, double>, 3> &ranges, Index res, Executor &exec) {
    const double K0 = hp.K0(0), L0 = hp.Lambda0(0, 0);
    const double n0 = static_cast<double>(hp.n0);
    auto axis = [&](int a, Index i) {
        return ranges[a].first + (ranges[a].second - ranges[a].first) * static_cast<double>(i) / static_cast<double>(res - 1);
    };
    auto weight = [&](Index i) { return (i == 0 || i == res - 1) ? 0.5 : 1.0; };
    std::vector<double> e(static_cast<std::size_t>(ds.V)), d(static_cast<std::size_t>(ds.V));
    for (Index i = 0; i < ds.V; ++i) {
        e[static_cast<std::size_t>(i)] = ds.r(i) - ds.mu(i);
        d[static_cast<std::size_t>(i)] = ds.D.item(i)(0, 0);
    }
    const std::size_t planes = static_cast<std::size_t>(res * res);
    Moments mom = exec.reduce(
        planes, Moments{},
        [&](std::size_t lo, std::size_t hi) {
            Moments acc;
            std::vector<double> var(e.size());
            std::vector<double> lp(static_cast<std::size_t>(res));
            for (std::size_t s = lo; s < hi; ++s) {
                const Index iu = static_cast<Index>(s) / res, iv = static_cast<Index>(s) % res;
                const double u = axis(1, iu), v = axis(2, iv);
                const double lam = std::exp(u), rho = std::exp(v);
                for (std::size_t g = 0; g < e.size(); ++g) var[g] = 1.0 / rho + d[g] * d[g] / lam;
                const double base = log_gamma_pdf(lam, 0.5 * n0, 0.5 / L0) + log_gamma_pdf(rho, hp.a0, hp.b0) + u + v;
                double top = kNegInf;
                for (Index ik = 0; ik < res; ++ik) {
                    const double K = axis(0, ik);
                    double l = base + log_normal_pdf(K, K0, 1.0 / (hp.q0 * lam));
                    for (std::size_t g = 0; g < e.size(); ++g) l += log_normal_pdf(e[g], d[g] * K, var[g]);
                    lp[static_cast<std::size_t>(ik)] = l;
                    top = std::max(top, l);
                }
                if (!std::isfinite(top)) continue;
                if (top > acc.shift) acc.rescale(top);
                const double wuv = weight(iu) * weight(iv);
                for (Index ik = 0; ik < res; ++ik) {
                    double w = wuv * weight(ik) * std::exp(lp[static_cast<std::size_t>(ik)] - acc.shift);
                    const double K = axis(0, ik);
                    acc.w += w;
                    acc.m1[0] += w * K;
                    acc.m2[0] += w * K * K;
                    acc.m1[1] += w * u;
                    acc.m2[1] += w * u * u;
                    acc.m1[2] += w * v;
                    acc.m2[2] += w * v * v;
                    acc.lam += w * lam;
                    acc.rho += w * rho;
                }
            }
            return acc;
        },
        merge);
    if (!(mom.w > 0) || !std::isfinite(mom.w) || !std::isfinite(mom.shift)) {
        throw NumericError("quadrature: normalization mass below 1e-12; widen the ranges");
    }
    QuadratureResult out;
    out.ranges = ranges;
    out.resolution = res;
    out.E_K = mom.m1[0] / mom.w;
    out.E_Lambda = mom.lam / mom.w;
    out.E_rho = mom.rho / mom.w;
    auto sd = [&](int k) { return std::sqrt(std::max(mom.m2[k] / mom.w - std::pow(mom.m1[k] / mom.w, 2), 0.0)); };
    out.mean_log_lambda = mom.m1[1] / mom.w;
    out.mean_log_rho = mom.m1[2] / mom.w;
    out.sd_K = sd(0);
    out.sd_log_lambda = sd(1);
    out.sd_log_rho = sd(2);
    double cell = 1.0;
    for (const auto &[lo, hi] : ranges) cell *= (hi - lo) / static_cast<double>(res - 1);
    out.log_evidence = mom.shift + std::log(mom.w * cell);
    return out;
}

} // namespace

double kahan_sum(std::span<const double> values) {
    double sum = 0, comp = 0;
    for (double x : values) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

QuadratureResult oracle_posterior_mean(const Dataset &ds, const HyperParams &hp, const QuadratureSpec &spec,
                                       Executor &exec) {
    ds.validate();
    hp.validate();
    if (ds.N != 2) throw ShapeError("oracle_posterior_mean: only N = 2 instances");
    if (ds.V > 5) throw ParameterError("oracle_posterior_mean: V must be at most 5");
    if (spec.resolution < 200) throw ParameterError("oracle_posterior_mean: resolution must be at least 200");
    if (spec.ranges) return quadrature_pass(ds, hp, *spec.ranges, spec.resolution, exec);

    std::array<std::pair<double, double>, 3> ranges{{{hp.K0(0) - 20.0, hp.K0(0) + 20.0}, {-12.0, 14.0}, {-12.0, 14.0}}};
    QuadratureResult res = quadrature_pass(ds, hp, ranges, spec.resolution, exec);
    const double span = spec.min_sd + 2.0;
    for (int pass = 0; pass < spec.max_widenings; ++pass) {
        const std::array<double, 3> sd{std::max(res.sd_K, 1e-12), std::max(res.sd_log_lambda, 1e-12),
                                       std::max(res.sd_log_rho, 1e-12)};
        const std::array<double, 3> mean{res.E_K, res.mean_log_lambda, res.mean_log_rho};
        bool done = true;
        std::array<std::pair<double, double>, 3> next{};
        for (int k = 0; k < 3; ++k) {
            next[k] = {mean[k] - span * sd[k], mean[k] + span * sd[k]};
            bool covered = ranges[k].first <= mean[k] - spec.min_sd * sd[k] && ranges[k].second >= mean[k] + spec.min_sd * sd[k];
            bool fine = ranges[k].second - ranges[k].first <= 2.0 * (next[k].second - next[k].first);
            if (!covered || !fine) done = false;
        }
        if (done) return res;
        ranges = next;
        res = quadrature_pass(ds, hp, ranges, spec.resolution, exec);
    }
    return res;
}

LatentDraw sample_q(RngStream &rng, const VbState &st, const HyperParams &hp) {
    const Index V = st.V();
    LatentDraw z;
    z.Lambda = sample_wishart(rng, {hp.n0 + static_cast<long>(V), st.Lambda0L});
    z.K = sample_mvn(rng, st.K0K, (hp.q0 + static_cast<double>(V)) * z.Lambda, MvnMatrix::Precision);
    z.rho = sample_gamma(rng, {st.a_rho, st.b_rho});
    z.beta = MatBatch(V, st.dim(), 1);
    for (Index i = 0; i < V; ++i) {
        z.beta.vec(i) = sample_mvn(rng, st.mu_beta.vec(i), Mat(st.Lambda_beta.item(i)), MvnMatrix::Precision);
    }
    return z;
}

double oracle_log_ratio(const LatentDraw &z, const VbState &st, const Dataset &ds, const HyperParams &hp) {
    const Index V = ds.V;
    const double nu = static_cast<double>(hp.n0 + V);
    const double c = hp.q0 + static_cast<double>(V);
    double log_p = 0, log_q = 0;
    for (Index i = 0; i < V; ++i) {
        Vec beta = z.beta.vec(i);
        Vec d = ds.D.vec(i);
        log_p += log_normal_pdf(ds.r(i), d.dot(beta) + ds.mu(i), 1.0 / z.rho);
        log_p += log_mvn_prec(beta, z.K, z.Lambda);
        log_q += log_mvn_prec(beta, st.mu_beta.vec(i), Mat(st.Lambda_beta.item(i)));
    }
    log_p += log_mvn_prec(z.K, hp.K0, hp.q0 * z.Lambda);
    log_p += log_wishart_pdf(z.Lambda, static_cast<double>(hp.n0), hp.Lambda0);
    log_p += log_gamma_pdf(z.rho, hp.a0, hp.b0);
    log_q += log_gamma_pdf(z.rho, st.a_rho, st.b_rho);
    log_q += log_wishart_pdf(z.Lambda, nu, st.Lambda0L);
    log_q += log_mvn_prec(z.K, st.K0K, c * z.Lambda);
    return log_p - log_q;
}

McEstimate oracle_mc_elbo(const VbState &state, const Dataset &ds, const HyperParams &hp, std::size_t draws,
                          std::uint64_t seed, Executor &exec, std::optional<LatentSampler> sampler) {
    if (draws < 10000) throw ParameterError("oracle_mc_elbo: need at least 10^4 draws");
    struct Acc {
        double n = 0, mean = 0, m2 = 0;
        std::size_t excluded = 0;
    };
    Acc acc = exec.reduce(
        draws, Acc{},
        [&](std::size_t lo, std::size_t hi) {
            Acc a;
            for (std::size_t j = lo; j < hi; ++j) {
                RngStream rng(seed, j);
                LatentDraw z = sampler ? (*sampler)(rng) : sample_q(rng, state, hp);
                double x = oracle_log_ratio(z, state, ds, hp);
                if (!std::isfinite(x)) {
                    ++a.excluded;
                    continue;
                }
                a.n += 1;
                double delta = x - a.mean;
                a.mean += delta / a.n;
                a.m2 += delta * (x - a.mean);
            }
            return a;
        },
        [](Acc a, Acc b) {
            if (a.n == 0) {
                b.excluded += a.excluded;
                return b;
            }
            if (b.n == 0) {
                a.excluded += b.excluded;
                return a;
            }
            Acc out;
            out.n = a.n + b.n;
            double delta = b.mean - a.mean;
            out.mean = a.mean + delta * b.n / out.n;
            out.m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / out.n;
            out.excluded = a.excluded + b.excluded;
            return out;
        });
    if (acc.n < 2) throw NumericError("oracle_mc_elbo: fewer than two finite draws");
    McEstimate out;
    out.estimate = acc.mean;
    out.std_error = std::sqrt(acc.m2 / (acc.n - 1) / acc.n);
    out.used = static_cast<std::size_t>(acc.n);
    out.excluded = acc.excluded;
    return out;
}

double oracle_marginal_loglik_scalar(const Dataset &ds, double K, double Lambda, double rho) {
    if (ds.N != 2) throw ShapeError("oracle_marginal_loglik_scalar: N must be 2");
    double out = 0;
    for (Index i = 0; i < ds.V; ++i) {
        double d = ds.D.item(i)(0, 0);
        out += log_normal_pdf(ds.r(i), d * K + ds.mu(i), 1.0 / rho + d * d / Lambda);
    }
    return out;
}

ModelParams oracle_ml_estimate(const Dataset &ds) {
    ds.validate();
    if (ds.N != 2) throw ShapeError("oracle_ml_estimate: N must be 2");
    double sdd = 0, sde = 0;
    for (Index i = 0; i < ds.V; ++i) {
        double d = ds.D.item(i)(0, 0);
        sdd += d * d;
        sde += d * (ds.r(i) - ds.mu(i));
    }
    const double k_guess = sdd > 0 ? sde / sdd : 0.0;
    auto f = [&](const std::array<double, 3> &x) {
        double v = oracle_marginal_loglik_scalar(ds, x[0], std::exp(x[1]), std::exp(x[2]));
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    };

    std::array<double, 3> best{k_guess, 0, 0};
    double fbest = f(best);
    const int n = 41;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < n; ++c) {
                std::array<double, 3> x{k_guess - 3.0 + 6.0 * a / (n - 1), -8.0 + 24.0 * b / (n - 1), -8.0 + 24.0 * c / (n - 1)};
                double fx = f(x);
                if (fx < fbest) {
                    fbest = fx;
                    best = x;
                }
            }
        }
    }

    // Nelder-Mead polish with restarts.
    for (int restart = 0; restart < 6; ++restart) {
        std::array<std::array<double, 3>, 4> s;
        std::array<double, 4> fs;
        s[0] = best;
        for (int k = 0; k < 3; ++k) {
            s[k + 1] = best;
            s[k + 1][k] += restart == 0 ? 0.2 : 0.02;
        }
        for (int k = 0; k < 4; ++k) fs[k] = f(s[k]);
        for (int it = 0; it < 20000; ++it) {
            std::array<int, 4> ord{0, 1, 2, 3};
            std::sort(ord.begin(), ord.end(), [&](int x, int y) { return fs[x] < fs[y]; });
            auto s2 = s;
            auto f2 = fs;
            for (int k = 0; k < 4; ++k) {
                s[k] = s2[ord[k]];
                fs[k] = f2[ord[k]];
            }
            if (std::abs(fs[3] - fs[0]) <= 1e-15 * (1.0 + std::abs(fs[0]))) break;
            std::array<double, 3> cen{};
            for (int k = 0; k < 3; ++k) {
                for (int j = 0; j < 3; ++j) cen[j] += s[k][j] / 3.0;
            }
            auto along = [&](double t) {
                std::array<double, 3> x;
                for (int j = 0; j < 3; ++j) x[j] = cen[j] + t * (s[3][j] - cen[j]);
                return x;
            };
            auto xr = along(-1.0);
            double fr = f(xr);
            if (fr < fs[0]) {
                auto xe = along(-2.0);
                double fe = f(xe);
                if (fe < fr) {
                    s[3] = xe;
                    fs[3] = fe;
                } else {
                    s[3] = xr;
                    fs[3] = fr;
                }
            } else if (fr < fs[2]) {
                s[3] = xr;
                fs[3] = fr;
            } else {
                auto xc = fr < fs[3] ? along(-0.5) : along(0.5);
                double fc = f(xc);
                if (fc < std::min(fr, fs[3])) {
                    s[3] = xc;
                    fs[3] = fc;
                } else {
                    for (int k = 1; k < 4; ++k) {
                        for (int j = 0; j < 3; ++j) s[k][j] = s[0][j] + 0.5 * (s[k][j] - s[0][j]);
                        fs[k] = f(s[k]);
                    }
                }
            }
        }
        int arg = static_cast<int>(std::min_element(fs.begin(), fs.end()) - fs.begin());
        if (fs[arg] <= fbest) {
            fbest = fs[arg];
            best = s[arg];
        }
    }
    ModelParams out;
    out.K = Vec::Constant(1, best[0]);
    out.Lambda = Mat::Constant(1, 1, std::exp(best[1]));
    out.rho = std::exp(best[2]);
    return out;
}

std::map<std::string, bool> oracle_evaluate(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim) {
    std::map<std::string, bool> memo;
    const std::size_t limit = net.inputs().size() + net.gates().size() + 1;
    std::function<bool(const std::string &, std::size_t)> value = [&](const std::string &name, std::size_t depth) -> bool {
        if (depth > limit) throw GraphError("oracle_evaluate: cycle through " + name);
        if (auto it = memo.find(name); it != memo.end()) return it->second;
        bool v;
        if (auto f = fault.overrides.find(name); f != fault.overrides.end()) {
            v = f->second;
        } else if (stim.drug_targets.count(name)) {
            v = false;
        } else if (net.is_input(name)) {
            auto a = stim.assignment.find(name);
            if (a == stim.assignment.end()) throw GraphError("oracle_evaluate: input " + name + " unassigned");
            v = a->second;
        } else {
            auto g = net.gates().find(name);
            if (g == net.gates().end()) throw GraphError("oracle_evaluate: unknown node " + name);
            const Gate &gate = g->second;
            switch (gate.kind) {
            case GateKind::And:
                v = true;
                for (const auto &in : gate.fanin) v = value(in, depth + 1) && v;
                break;
            case GateKind::Or:
                v = false;
                for (const auto &in : gate.fanin) v = value(in, depth + 1) || v;
                break;
            case GateKind::Not:
                v = !value(gate.fanin.at(0), depth + 1);
                break;
            case GateKind::Buf:
                v = value(gate.fanin.at(0), depth + 1);
                break;
            default:
                throw GraphError("oracle_evaluate: unknown gate kind");
            }
        }
        memo[name] = v;
        return v;
    };
    std::map<std::string, bool> out;
    for (const auto &o : net.outputs()) out[o] = value(o, 0);
    return out;
}

std::vector<std::vector<bool>> oracle_truth_table(const BooleanNetwork &net, const FaultMap &fault,
                                                  const std::set<std::string> &drugs) {
    const std::size_t n = net.inputs().size();
    if (n > 20) throw ParameterError("oracle_truth_table: too many inputs");
    std::vector<std::vector<bool>> rows;
    for (std::size_t k = 0; k < (std::size_t{1} << n); ++k) {
        Stimulus s;
        s.drug_targets = drugs;
        for (std::size_t j = 0; j < n; ++j) s.assignment[net.inputs()[j]] = (k >> j) & 1u;
        auto vals = oracle_evaluate(net, fault, s);
        std::vector<bool> row;
        for (const auto &o : net.outputs()) row.push_back(vals.at(o));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace subpop
