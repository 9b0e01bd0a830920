#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "subpop/model.hpp"

namespace subpop::test {

/// Dataset from explicit (r, d) rows.
inline Dataset make_dataset(const std::vector<std::pair<double, std::vector<double>>> &rows) {
    std::vector<RawRecord> recs;
    for (const auto &[r, d] : rows) recs.push_back({r, {Eigen::Map<const Vec>(d.data(), static_cast<Index>(d.size()))}});
    return transform(recs);
}

/// Proper, moderately informative priors for tiny scalar instances.
inline HyperParams tiny_hyper(double K0 = 0.3) {
    HyperParams hp;
    hp.a0 = 3.0;
    hp.b0 = 0.03;
    hp.q0 = 1.0;
    hp.n0 = 3;
    hp.K0 = Vec::Constant(1, K0);
    hp.Lambda0 = Mat::Constant(1, 1, 100.0 / 3.0);
    return hp;
}

/// Paper-regime truth: K = (0.1, 0.3), rho = 100, Lambda = paper_lambda().
inline ModelParams paper_truth() {
    ModelParams p;
    p.K = Vec(2);
    p.K << 0.1, 0.3;
    p.Lambda = paper_lambda();
    p.rho = 100.0;
    return p;
}

inline Dataset paper_dataset(Index V, std::uint64_t seed, const ModelParams &truth = paper_truth()) {
    RngStream prng(seed, 1), rng(seed, 2);
    return synth_generate(rng, truth, random_binary_profiles(prng, V, truth.K.size() + 1));
}

inline double mean(const std::vector<double> &x) {
    double s = 0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double> &x) {
    double m = mean(x), s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

/// One-sample Kolmogorov-Smirnov statistic D_n.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)> &cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic KS critical value sqrt(-ln(alpha/2)/2)/sqrt(n).
inline double ks_critical(std::size_t n, double alpha) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

/// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

inline double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha) {
    double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) * std::sqrt((nn + mm) / (nn * mm));
}

} // namespace subpop::test
