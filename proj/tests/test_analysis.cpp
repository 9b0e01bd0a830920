#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numbers>

#include "subpop/analysis.hpp"
#include "support.hpp"

using namespace subpop;
using namespace subpop::test;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    RngStream rng(seed, 0);
    std::vector<double> x(n);
    for (double &v : x) v = scale * rng.normal();
    return x;
}

double cell_width(const KdeModel &m, const GridSpec &g) {
    double lo = m.samples.col(0).minCoeff(), hi = m.samples.col(0).maxCoeff();
    double h = m.scales()(0);
    return (hi - lo + 2 * g.pad * h) / static_cast<double>(g.points - 1);
}

} // namespace

TEST_CASE("Scott bandwidth") {
    auto x = normals(10000, 1);
    KdeModel m = kde_fit(std::span<const double>(x));
    double sd = std::sqrt(variance(x));
    CHECK(m.scales()(0) == doctest::Approx(std::pow(10000.0, -0.2) * sd).epsilon(1e-12));
    CHECK(m.scales()(0) == doctest::Approx(0.158).epsilon(0.03));

    Mat two(500, 2);
    RngStream rng(2, 0);
    for (Index i = 0; i < 500; ++i) {
        two(i, 0) = rng.normal();
        two(i, 1) = 5 * rng.normal();
    }
    Vec h = scott_bandwidth(two);
    CHECK(h(1) / h(0) == doctest::Approx(std::sqrt(variance(std::vector<double>(two.col(1).data(), two.col(1).data() + 500)) /
                                                   variance(std::vector<double>(two.col(0).data(), two.col(0).data() + 500)))));
}

TEST_CASE("explicit bandwidth is used as given") {
    auto x = normals(100, 3);
    KdeModel m = kde_fit(std::span<const double>(x), 0.37);
    CHECK(m.scales()(0) == 0.37);
    CHECK(m.bandwidth(0, 0) == 0.37 * 0.37);
}

TEST_CASE("bandwidth errors") {
    std::vector<double> same(50, 1.5);
    CHECK_THROWS_AS(kde_fit(std::span<const double>(same)), BandwidthError);
    CHECK_THROWS_AS(kde_fit(std::span<const double>(same), -1.0), BandwidthError);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(kde_fit(std::span<const double>(one), 1.0), EmptyInputError);
}

TEST_CASE("KDE of standard normal samples is close to the normal density") {
    auto x = normals(100000, 4);
    KdeModel m = kde_fit(std::span<const double>(x));
    DensityGrid g = density_grid(m);
    double worst = 0;
    for (std::size_t j = 0; j < g.x.size(); ++j) {
        double f = std::exp(-0.5 * g.x[j] * g.x[j]) / std::sqrt(2 * std::numbers::pi);
        worst = std::max(worst, std::abs(g.density[j] - f));
        CHECK(g.density[j] >= 0);
    }
    CHECK(worst < 0.01);
}

TEST_CASE("density integrates to one over a padded grid") {
    for (std::uint64_t seed : {5u, 6u}) {
        auto x = normals(2000, seed, 3.0);
        for (double &v : x) v = v * v * 0.2 + (seed == 5 ? 0.0 : v);
        KdeModel m = kde_fit(std::span<const double>(x));
        DensityGrid g = density_grid(m, {1025, 5.0});
        CHECK(std::abs(trapezoid(g) - 1.0) < 0.02);
        DensityGrid g4 = density_grid(m, {1025, 4.0});
        CHECK(trapezoid(g4) >= 0.9);
        CHECK(trapezoid(g4) <= 1.0 + 1e-9);
    }
}

TEST_CASE("mode of a constant sample") {
    std::vector<double> c(20, 0.42);
    KdeModel m = kde_fit(std::span<const double>(c), 0.05);
    ModeResult r = kde_mode(m);
    CHECK(r.mode(0) == doctest::Approx(0.42).epsilon(1e-9));
    CHECK_FALSE(r.multimodal);
}

TEST_CASE("mode of a symmetric Gaussian sample is at its mean") {
    auto half = normals(5000, 7, 2.0);
    std::vector<double> x;
    for (double v : half) {
        x.push_back(1.5 + v);
        x.push_back(1.5 - v);
    }
    KdeModel m = kde_fit(std::span<const double>(x));
    GridSpec spec;
    ModeResult r = kde_mode(m, spec);
    CHECK(std::abs(r.mode(0) - mean(x)) < 2 * cell_width(m, spec));
}

TEST_CASE("tied modes report the lowest and raise the flag") {
    std::vector<double> x{-3, -3.1, -2.9, 3, 3.1, 2.9};
    KdeModel m = kde_fit(std::span<const double>(x), 0.2);
    ModeResult r = kde_mode(m);
    CHECK(r.multimodal);
    CHECK(r.mode(0) < 0);
    CHECK(std::abs(r.mode(0) + 3) < 0.1);
}

TEST_CASE("grid resolution below 256 is rejected") {
    auto x = normals(100, 8);
    CHECK_THROWS_AS(kde_mode(kde_fit(std::span<const double>(x)), {255, 4.0}), ParameterError);
}

TEST_CASE("mode is invariant to sample order") {
    auto x = normals(3000, 9);
    for (double &v : x) v = std::exp(0.5 * v);
    auto y = x;
    std::reverse(y.begin(), y.end());
    std::rotate(y.begin(), y.begin() + 777, y.end());
    ModeResult a = kde_mode(kde_fit(std::span<const double>(x)));
    ModeResult b = kde_mode(kde_fit(std::span<const double>(y)));
    CHECK(a.mode(0) == doctest::Approx(b.mode(0)).epsilon(1e-12));
}

TEST_CASE("mode scales with the samples and bandwidth") {
    auto x = normals(3000, 10);
    for (double &v : x) v = std::exp(0.4 * v);
    const double s = 3.0;
    std::vector<double> y;
    for (double v : x) y.push_back(s * v);
    ModeResult a = kde_mode(kde_fit(std::span<const double>(x), 0.1));
    ModeResult b = kde_mode(kde_fit(std::span<const double>(y), 0.1 * s));
    CHECK(b.mode(0) == doctest::Approx(s * a.mode(0)).epsilon(1e-9));
}

TEST_CASE("two-dimensional mode") {
    RngStream rng(11, 0);
    Mat x(4000, 2);
    for (Index i = 0; i < 2000; ++i) {
        double u = rng.normal(), v = rng.normal();
        x.row(2 * i) << 0.2 + 0.1 * u, -0.4 + 0.1 * v;
        x.row(2 * i + 1) << 0.2 - 0.1 * u, -0.4 - 0.1 * v;
    }
    ModeResult r = kde_mode(kde_fit(x));
    CHECK(std::abs(r.mode(0) - 0.2) < 0.01);
    CHECK(std::abs(r.mode(1) + 0.4) < 0.01);
}

TEST_CASE("summary of constant K draws") {
    ParamSamples s;
    RngStream rng(12, 0);
    for (int i = 0; i < 200; ++i) {
        Vec k(2);
        k << 0.1, 0.3;
        s.K.push_back(k);
        s.Lambda.push_back(paper_lambda() * (1 + 0.1 * rng.normal()));
        s.rho.push_back(100 + rng.normal());
    }
    PosteriorSummary sum = summarize(s);
    REQUIRE(sum.full_weights_mode.size() == 3);
    CHECK(sum.full_weights_mode(0) == doctest::Approx(0.1));
    CHECK(sum.full_weights_mode(1) == doctest::Approx(0.3));
    CHECK(sum.full_weights_mode(2) == doctest::Approx(0.6));
    CHECK(sum.get("K3").constant);
    CHECK_FALSE(sum.get("rho").constant);
    CHECK(std::abs(sum.get("rho").mode - 100) < 1.0);
    CHECK_THROWS_AS(sum.get("nope"), ParameterError);
}

TEST_CASE("central interval of normal draws") {
    auto x = normals(100000, 13);
    MarginalSummary m = summarize_series("z", x);
    CHECK(std::abs(m.lower + 1.96) < 0.05);
    CHECK(std::abs(m.upper - 1.96) < 0.05);
    CHECK(std::abs(m.mode) < 0.1);
}

TEST_CASE("summary needs 100 draws and names every marginal") {
    ParamSamples s;
    for (int i = 0; i < 99; ++i) {
        s.K.push_back(Vec::Constant(2, 0.1 * i));
        s.Lambda.push_back(Mat::Identity(2, 2) * (1 + i));
        s.rho.push_back(1 + i);
    }
    CHECK_THROWS_AS(summarize(s), EmptyInputError);
    auto series = marginal_series(s);
    std::vector<std::string> names;
    for (auto &[n, v] : series) names.push_back(n);
    CHECK(names == std::vector<std::string>{"K1", "K2", "K3", "rho", "Lambda_11", "Lambda_12", "Lambda_22"});
    CHECK(series[2].second[10] == doctest::Approx(1 - 2 * 0.1 * 10));
}

TEST_CASE("quantiles interpolate linearly") {
    std::vector<double> v{4, 1, 3, 2, 5};
    CHECK(quantile(v, 0.0) == 1);
    CHECK(quantile(v, 1.0) == 5);
    CHECK(quantile(v, 0.5) == 3);
    CHECK(quantile(v, 0.1) == doctest::Approx(1.4));
    CHECK_THROWS_AS(quantile(v, 1.5), ParameterError);
}
