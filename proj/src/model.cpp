#include "subpop/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>

#include "subpop/samplers.hpp"

namespace subpop {

namespace {

void require_spd(const Mat &m, const char *what) {
    if (m.rows() != m.cols()) throw ShapeError(std::string(what) + " must be square");
    if (!m.allFinite()) throw NumericError(std::string(what) + " has non-finite entries");
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
}

} // namespace

void Dataset::validate() const {
    if (N < 2) throw ShapeError("Dataset: N must be >= 2");
    if (V <= 0) throw EmptyInputError("Dataset: no genes");
    if (r.size() != V || mu.size() != V || D.batch() != V || D.rows() != N - 1 || D.cols() != 1) {
        throw ShapeError("Dataset: inconsistent lengths");
    }
}

void HyperParams::validate() const {
    if (!(a0 > 0) || !(b0 > 0) || !(q0 > 0) || n0 <= 0) throw ParameterError("HyperParams: a0, b0, q0, n0 must be positive");
    if (Lambda0.rows() != K0.size()) throw ShapeError("HyperParams: K0 and Lambda0 disagree in dimension");
    require_spd(Lambda0, "HyperParams: Lambda0");
}

void ModelParams::validate() const {
    if (!(rho > 0) || !std::isfinite(rho)) throw ParameterError("ModelParams: rho must be positive");
    if (Lambda.rows() != K.size()) throw ShapeError("ModelParams: K and Lambda disagree in dimension");
    require_spd(Lambda, "ModelParams: Lambda");
}

Dataset transform(const std::vector<RawRecord> &records) {
    if (records.empty()) throw EmptyInputError("transform: no records");
    const Index N = records.front().profile.d.size();
    if (N < 2) throw ShapeError("transform: profiles need N >= 2");
    detail::check_item_dim(N - 1, 1, "transform");
    Dataset ds;
    ds.V = static_cast<Index>(records.size());
    ds.N = N;
    ds.r.resize(ds.V);
    ds.mu.resize(ds.V);
    ds.D = MatBatch(ds.V, N - 1, 1);
    for (Index i = 0; i < ds.V; ++i) {
        const auto &rec = records[static_cast<std::size_t>(i)];
        if (rec.profile.d.size() != N) throw ShapeError("transform: record " + std::to_string(i) + " has a different N");
        if (!std::isfinite(rec.r) || !rec.profile.d.allFinite()) {
            throw NumericError("transform: record " + std::to_string(i) + " is not finite");
        }
        ds.r(i) = rec.r;
        ds.mu(i) = rec.profile.d(N - 1);
        ds.D.vec(i) = rec.profile.d.head(N - 1).array() - ds.mu(i);
    }
    return ds;
}

std::vector<ExpressionProfile> reconstruct_profiles(const Dataset &ds) {
    std::vector<ExpressionProfile> out(static_cast<std::size_t>(ds.V));
    for (Index i = 0; i < ds.V; ++i) {
        Vec d(ds.N);
        d.head(ds.N - 1) = ds.D.vec(i).array() + ds.mu(i);
        d(ds.N - 1) = ds.mu(i);
        out[static_cast<std::size_t>(i)].d = std::move(d);
    }
    return out;
}

Mat paper_lambda() {
    Mat cov(2, 2);
    cov << 0.01, 0.005, 0.005, 0.008;
    return inverse_small(cov);
}

HyperParams default_hyperparams(Index N) {
    if (N < 2) throw ParameterError("default_hyperparams: N must be >= 2");
    HyperParams hp;
    const Index p = N - 1;
    if (N == 3) {
        hp.K0 = Vec::Constant(p, 1.0 / 3.0);
        hp.Lambda0 = paper_lambda();
    } else {
        // N = 2 keeps the paper's 1/3; other sizes use the uniform weight 1/N.
        hp.K0 = Vec::Constant(p, N == 2 ? 1.0 / 3.0 : 1.0 / static_cast<double>(N));
        hp.Lambda0 = Mat::Identity(p, p) * 100.0;
    }
    return hp;
}

std::vector<ExpressionProfile> random_binary_profiles(RngStream &rng, Index V, Index N, bool include_constant) {
    if (V <= 0 || N < 2) throw ParameterError("random_binary_profiles: need V >= 1 and N >= 2");
    if (N > 62) throw ParameterError("random_binary_profiles: N too large");
    const std::uint64_t all = (std::uint64_t{1} << N) - 1;
    std::vector<ExpressionProfile> out;
    out.reserve(static_cast<std::size_t>(V));
    while (static_cast<Index>(out.size()) < V) {
        std::uint64_t bits = (static_cast<std::uint64_t>(rng.engine()()) << 32) | rng.engine()();
        bits &= all;
        if (!include_constant && (bits == 0 || bits == all)) continue;
        Vec d(N);
        for (Index q = 0; q < N; ++q) d(q) = static_cast<double>((bits >> q) & 1u);
        out.push_back({std::move(d)});
    }
    return out;
}

Dataset synth_generate(RngStream &rng, const ModelParams &truth, const std::vector<ExpressionProfile> &profiles,
                       SynthNoise noise) {
    truth.validate();
    std::vector<RawRecord> records;
    records.reserve(profiles.size());
    for (const auto &p : profiles) records.push_back({0.0, p});
    Dataset ds = transform(records);
    if (ds.dim() != truth.K.size()) throw ShapeError("synth_generate: truth dimension does not match profiles");
    Mat cov = symmetrized(inverse_small(truth.Lambda));
    Mat chol = cholesky_small(cov);
    const double sd = 1.0 / std::sqrt(truth.rho);
    Vec u(ds.dim());
    for (Index i = 0; i < ds.V; ++i) {
        Vec beta = truth.K;
        double eps = 0.0;
        if (noise == SynthNoise::Full) {
            for (Index k = 0; k < u.size(); ++k) u(k) = rng.normal();
            beta = mvn_from_normals(truth.K, chol, u);
            eps = sd * rng.normal();
        }
        ds.r(i) = ds.D.vec(i).dot(beta) + ds.mu(i) + eps;
    }
    return ds;
}

double marginal_loglik(const Dataset &ds, const ModelParams &p, Executor &exec) {
    ds.validate();
    if (!(p.rho > 0)) throw ParameterError("marginal_loglik: rho must be positive");
    require_spd(p.Lambda, "marginal_loglik: Lambda");
    const Mat cov = symmetrized(inverse_small(p.Lambda));
    const double log2pi = std::log(2.0 * std::numbers::pi);
    return exec.reduce(
        static_cast<std::size_t>(ds.V), 0.0,
        [&](std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t s = lo; s < hi; ++s) {
                const Index i = static_cast<Index>(s);
                auto d = ds.D.vec(i);
                double var = 1.0 / p.rho + d.dot(cov * d);
                double e = ds.r(i) - ds.mu(i) - d.dot(p.K);
                acc += -0.5 * (log2pi + std::log(var) + e * e / var);
            }
            return acc;
        },
        [](double a, double b) { return a + b; });
}

Vec marginal_loglik_grad_K(const Dataset &ds, const ModelParams &p) {
    ds.validate();
    const Mat cov = symmetrized(inverse_small(p.Lambda));
    Vec g = Vec::Zero(p.K.size());
    for (Index i = 0; i < ds.V; ++i) {
        auto d = ds.D.vec(i);
        double var = 1.0 / p.rho + d.dot(cov * d);
        double e = ds.r(i) - ds.mu(i) - d.dot(p.K);
        g += (e / var) * d;
    }
    return g;
}

Vec full_weights(const Eigen::Ref<const Vec> &K) {
    Vec w(K.size() + 1);
    w.head(K.size()) = K;
    w(K.size()) = 1.0 - K.sum();
    return w;
}

} // namespace subpop
