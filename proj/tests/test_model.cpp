#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "subpop/model.hpp"
#include "support.hpp"

using namespace subpop;
using namespace subpop::test;

namespace {

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

double normal_pdf(double x, double m, double var) {
    return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2 * std::numbers::pi * var);
}

} // namespace

TEST_CASE("transform examples") {
    Dataset a = transform({{0.2, {vec({1, 0, 0})}}, {0.4, {vec({0, 1, 1})}}});
    CHECK(a.V == 2);
    CHECK(a.N == 3);
    CHECK(a.mu(0) == 0);
    CHECK(a.D.vec(0) == vec({1, 0}));
    CHECK(a.mu(1) == 1);
    CHECK(a.D.vec(1) == vec({-1, 0}));
    Dataset b = transform({{0.0, {vec({1, 1})}}});
    CHECK(b.mu(0) == 1);
    CHECK(b.D.vec(0)(0) == 0);
}

TEST_CASE("transform errors") {
    CHECK_THROWS_AS(transform({}), EmptyInputError);
    CHECK_THROWS_AS(transform({{0.0, {vec({1, 0})}}, {0.0, {vec({1, 0, 1})}}}), ShapeError);
    CHECK_THROWS_AS(transform({{0.0, {vec({1})}}}), ShapeError);
}

TEST_CASE("transform is inverted by reconstruct_profiles") {
    RngStream rng(3, 0);
    std::vector<RawRecord> recs;
    for (int i = 0; i < 50; ++i) {
        Vec d(4);
        for (Index q = 0; q < 4; ++q) d(q) = rng.normal();
        recs.push_back({rng.normal(), {d}});
    }
    auto back = reconstruct_profiles(transform(recs));
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK((back[i].d - recs[i].profile.d).norm() < 1e-15);
}

TEST_CASE("default hyperparameters") {
    HyperParams h3 = default_hyperparams(3);
    Mat expect(2, 2);
    expect << 1600.0 / 11.0, -1000.0 / 11.0, -1000.0 / 11.0, 2000.0 / 11.0;
    CHECK((h3.Lambda0 - expect).norm() < 1e-9);
    CHECK(h3.Lambda0(0, 0) == doctest::Approx(145.4545454545));
    CHECK(h3.Lambda0(0, 1) == doctest::Approx(-90.9090909091));
    CHECK(h3.Lambda0(1, 1) == doctest::Approx(181.8181818182));
    CHECK(h3.K0 == Vec::Constant(2, 1.0 / 3.0));
    CHECK(h3.a0 == 0.5);
    CHECK(h3.b0 == 0.5);
    CHECK(h3.q0 == 0.001);
    CHECK(h3.n0 == 1);

    HyperParams h2 = default_hyperparams(2);
    CHECK(h2.K0.size() == 1);
    CHECK(h2.K0(0) == doctest::Approx(1.0 / 3.0));
    CHECK(h2.Lambda0(0, 0) == doctest::Approx(100.0));

    HyperParams h5 = default_hyperparams(5);
    CHECK(h5.K0 == Vec::Constant(4, 0.2));
    CHECK((h5.Lambda0 - 100.0 * Mat::Identity(4, 4)).norm() < 1e-12);
    CHECK_THROWS_AS(default_hyperparams(1), ParameterError);
}

TEST_CASE("full weights") {
    Vec w = full_weights(vec({0.1, 0.3}));
    CHECK(w.size() == 3);
    CHECK(w(2) == doctest::Approx(0.6));
    Vec s = full_weights(vec({1.0 / 3, 1.0 / 3}));
    CHECK(s(2) == doctest::Approx(1.0 / 3));
    Vec t = full_weights(vec({0.6676, 0.2782}));
    CHECK(t(2) == doctest::Approx(0.0542));
}

TEST_CASE("noiseless synthesis reproduces the mean exactly") {
    RngStream prng(1, 1), rng(1, 2);
    auto profiles = random_binary_profiles(prng, 200, 3);
    Dataset ds = synth_generate(rng, paper_truth(), profiles, SynthNoise::None);
    for (Index i = 0; i < ds.V; ++i) CHECK(ds.r(i) == ds.D.vec(i).dot(paper_truth().K) + ds.mu(i));
}

TEST_CASE("binary profiles exclude constant vectors unless asked") {
    RngStream rng(2, 0);
    auto p = random_binary_profiles(rng, 5000, 3);
    for (auto &e : p) CHECK_FALSE((e.d.minCoeff() == e.d.maxCoeff()));
    RngStream rng2(2, 1);
    auto all = random_binary_profiles(rng2, 5000, 3, true);
    int constant = 0;
    for (auto &e : all) constant += e.d.minCoeff() == e.d.maxCoeff();
    // Two of eight vectors are constant.
    CHECK(std::abs(constant / 5000.0 - 0.25) < 4 * std::sqrt(0.25 * 0.75 / 5000));
}

TEST_CASE("noise variance with D = 0 equals 1/rho") {
    const Index V = 100000;
    std::vector<ExpressionProfile> profiles(V, ExpressionProfile{vec({1, 1, 1})});
    RngStream rng(4, 2);
    Dataset ds = synth_generate(rng, paper_truth(), profiles);
    std::vector<double> e(static_cast<std::size_t>(V));
    for (Index i = 0; i < V; ++i) e[static_cast<std::size_t>(i)] = ds.r(i) - ds.mu(i);
    CHECK(std::abs(variance(e) * 100.0 - 1.0) < 0.05);
}

TEST_CASE("synthesis is reproducible") {
    Dataset a = paper_dataset(500, 17), b = paper_dataset(500, 17), c = paper_dataset(500, 18);
    CHECK(a.r == b.r);
    CHECK(a.r != c.r);
}

TEST_CASE("marginal loglik with D = 0 is a plain normal") {
    Dataset ds = make_dataset({{0.3, {1, 1}}, {-0.2, {0, 0}}, {1.7, {2, 2}}});
    ModelParams p{vec({0.4}), Mat::Constant(1, 1, 3.0), 7.0};
    double expect = 0;
    for (Index i = 0; i < ds.V; ++i) expect += std::log(normal_pdf(ds.r(i), ds.mu(i), 1.0 / 7.0));
    CHECK(marginal_loglik(ds, p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("single gene marginal matches numerical integration") {
    for (auto [r, D, K, L, rho] : std::vector<std::array<double, 5>>{
             {0.7, 1.0, 0.2, 4.0, 10.0}, {-0.3, -1.0, 0.5, 100.0, 100.0}, {2.0, 2.5, -0.1, 0.5, 0.8}}) {
        Dataset ds = make_dataset({{r, {D, 0.0}}});
        ModelParams p{vec({K}), Mat::Constant(1, 1, L), rho};
        const double sd = 1 / std::sqrt(L);
        const int n = 200000;
        const double lo = K - 14 * sd, hi = K + 14 * sd, h = (hi - lo) / n;
        double integral = 0;
        for (int j = 0; j <= n; ++j) {
            double b = lo + j * h;
            double f = normal_pdf(r, D * b, 1 / rho) * normal_pdf(b, K, 1 / L);
            integral += (j == 0 || j == n ? 0.5 : 1.0) * f * h;
        }
        CHECK(std::abs(marginal_loglik(ds, p) - std::log(integral)) < 1e-6);
    }
}

TEST_CASE("marginal loglik is invariant to a location shift") {
    Dataset ds = paper_dataset(300, 5);
    Dataset shifted = ds;
    shifted.r.array() += 3.25;
    shifted.mu.array() += 3.25;
    ModelParams p = paper_truth();
    CHECK(marginal_loglik(shifted, p) == doctest::Approx(marginal_loglik(ds, p)).epsilon(1e-12));
}

TEST_CASE("gradient in K matches central differences and vanishes at the GLS solution") {
    Dataset ds = paper_dataset(400, 6);
    ModelParams p = paper_truth();
    p.K << 0.25, 0.05;
    Vec g = marginal_loglik_grad_K(ds, p);
    for (Index k = 0; k < 2; ++k) {
        const double h = 1e-5;
        ModelParams a = p, b = p;
        a.K(k) += h;
        b.K(k) -= h;
        double fd = (marginal_loglik(ds, a) - marginal_loglik(ds, b)) / (2 * h);
        CHECK(std::abs(fd - g(k)) <= 1e-5 * std::abs(g(k)));
    }

    // Generalized least squares solution with the marginal variances as weights.
    Mat sigma = p.Lambda.inverse();
    Mat A = Mat::Zero(2, 2);
    Vec c = Vec::Zero(2);
    for (Index i = 0; i < ds.V; ++i) {
        Vec d = ds.D.vec(i);
        double w = 1 / (1 / p.rho + d.dot(sigma * d));
        A += w * d * d.transpose();
        c += w * d * (ds.r(i) - ds.mu(i));
    }
    ModelParams best = p;
    best.K = A.ldlt().solve(c);
    CHECK(marginal_loglik_grad_K(ds, best).norm() < 1e-8 * c.norm());
    double top = marginal_loglik(ds, best);
    for (Vec dir : {vec({1, 0}), vec({0, 1}), vec({1, -1})}) {
        ModelParams q = best;
        q.K += 1e-3 * dir;
        CHECK(marginal_loglik(ds, q) < top);
    }
}

TEST_CASE("parameter validation") {
    ModelParams p = paper_truth();
    p.rho = 0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    ModelParams q = paper_truth();
    q.Lambda(0, 1) = q.Lambda(1, 0) = 1e6;
    CHECK_THROWS_AS(q.validate(), NumericError);
    HyperParams h = default_hyperparams(3);
    h.q0 = -1;
    CHECK_THROWS_AS(h.validate(), ParameterError);
}
