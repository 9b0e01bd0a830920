#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "subpop/em.hpp"
#include "subpop/oracles.hpp"
#include "support.hpp"

using namespace subpop;
using namespace subpop::test;

namespace {

/// Scalar instance where every profile type occurs, so rho is identifiable.
Dataset identifiable_scalar(Index V, std::uint64_t seed) {
    ModelParams truth{Vec::Constant(1, 0.3), Mat::Constant(1, 1, 40.0), 150.0};
    RngStream prng(seed, 1), rng(seed, 2);
    return synth_generate(rng, truth, random_binary_profiles(prng, V, 2, true));
}

} // namespace

TEST_CASE("rho = 0 gives the prior covariance") {
    Dataset ds = paper_dataset(40, 1);
    ModelParams p = paper_truth();
    p.rho = 0;
    EmState st = em_expect(p, ds);
    Mat cov = paper_lambda().inverse();
    for (Index i = 0; i < ds.V; ++i) CHECK((Mat(st.Sigma.item(i)) - cov).norm() < 1e-12 * cov.norm());
}

TEST_CASE("equal S_i give rho = 1/s") {
    Dataset ds = make_dataset({{0.5, {1, 1}}, {-0.5, {0, 0}}, {1.5, {1, 1}}, {0.5, {1, 1}}});
    EmState st;
    st.params = {Vec::Constant(1, 0.2), Mat::Constant(1, 1, 4.0), 3.0};
    em_step(st, ds);
    for (double s : st.S) CHECK(s == doctest::Approx(0.25));
    CHECK(st.params.rho == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("D = 0 leaves K fixed") {
    Dataset ds = make_dataset({{0.1, {1, 1, 1}}, {0.7, {0, 0, 0}}, {-0.4, {1, 1, 1}}});
    EmState st;
    st.params = paper_truth();
    const Vec K = st.params.K;
    em_step(st, ds);
    for (Index i = 0; i < ds.V; ++i) CHECK((st.M.vec(i) - K).norm() < 1e-14);
    CHECK((st.params.K - K).norm() < 1e-14);
}

TEST_CASE("sum of S_i must be positive") {
    Dataset ds = make_dataset({{1.0, {1, 1}}, {0.0, {0, 0}}});
    EmState st;
    st.params = {Vec::Constant(1, 0.2), Mat::Constant(1, 1, 4.0), 3.0};
    CHECK_THROWS_AS(em_step(st, ds), NumericError);
}

TEST_CASE("K is a fixed point on noiseless data") {
    RngStream prng(2, 1), rng(2, 2);
    Dataset ds = synth_generate(rng, paper_truth(), random_binary_profiles(prng, 300, 3), SynthNoise::None);
    EmState st;
    st.params = paper_truth();
    em_step(st, ds);
    CHECK((st.params.K - paper_truth().K).norm() < 1e-6);
}

TEST_CASE("a converged fit is a fixed point") {
    Dataset ds = identifiable_scalar(200, 3);
    EmFit fit = em_fit(ds, {Vec::Constant(1, 0.0), Mat::Constant(1, 1, 10.0), 10.0}, {100000, 1e-15});
    EmState st;
    st.params = fit.params;
    em_step(st, ds);
    CHECK(std::abs(st.params.K(0) - fit.params.K(0)) < 1e-6);
    CHECK(std::abs(st.params.rho / fit.params.rho - 1) < 1e-6);
    CHECK(std::abs(st.params.Lambda(0, 0) / fit.params.Lambda(0, 0) - 1) < 1e-6);
}

TEST_CASE("marginal likelihood never decreases") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Dataset ds = seed % 2 ? paper_dataset(100 + 10 * static_cast<Index>(seed), seed) : identifiable_scalar(80, seed);
        ModelParams init = em_default_init(default_hyperparams(ds.N));
        EmFit fit = em_fit(ds, init, {200, 0.0});
        double prev = marginal_loglik(ds, init);
        for (const auto &row : fit.trace) {
            CHECK(row.loglik >= prev - 1e-9 * std::abs(prev));
            prev = row.loglik;
        }
    }
}

TEST_CASE("converged estimate matches direct maximization") {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        Dataset ds = identifiable_scalar(60, seed);
        ModelParams ml = oracle_ml_estimate(ds);
        EmFit fit = em_fit(ds, em_default_init(default_hyperparams(2)), {200000, 1e-15});
        CHECK_MESSAGE(std::abs(fit.params.K(0) - ml.K(0)) < 1e-3, "em " << fit.params.K(0) << " oracle " << ml.K(0));
        CHECK(marginal_loglik(ds, fit.params) >= oracle_marginal_loglik_scalar(ds, ml.K(0), ml.Lambda(0, 0), ml.rho) - 1e-6);
    }
}

TEST_CASE("gene order does not change the estimate") {
    Dataset ds = paper_dataset(500, 7);
    auto prof = reconstruct_profiles(ds);
    std::vector<std::pair<double, std::vector<double>>> rows;
    for (Index i = ds.V - 1; i >= 0; --i) {
        const Vec &d = prof[static_cast<std::size_t>(i)].d;
        rows.push_back({ds.r(i), {d(0), d(1), d(2)}});
    }
    Dataset rev = make_dataset(rows);
    ModelParams init = em_default_init(default_hyperparams(3));
    EmFit a = em_fit(ds, init, {50, 0.0}), b = em_fit(rev, init, {50, 0.0});
    CHECK((a.params.K - b.params.K).norm() < 1e-10);
    CHECK(std::abs(a.params.rho / b.params.rho - 1) < 1e-10);
}

TEST_CASE("Sigma_i is SPD for non-negative rho") {
    Dataset ds = paper_dataset(100, 8);
    for (double rho : {0.0, 1e-3, 1.0, 1e4}) {
        ModelParams p = paper_truth();
        p.rho = rho;
        EmState st = em_expect(p, ds);
        for (Index i = 0; i < ds.V; ++i) CHECK_NOTHROW(cholesky_small(Mat(st.Sigma.item(i))));
    }
    ModelParams bad = paper_truth();
    bad.rho = -1;
    CHECK_THROWS_AS(em_expect(bad, ds), ParameterError);
}

TEST_CASE("default init") {
    ModelParams p = em_default_init(default_hyperparams(3));
    CHECK(p.rho == 1.0);
    CHECK(p.K == Vec::Constant(2, 1.0 / 3.0));
}
