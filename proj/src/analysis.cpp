#include "subpop/analysis.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace subpop {

namespace {

Mat sorted_rows(const Mat &samples) {
    std::vector<Index> idx(static_cast<std::size_t>(samples.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
        for (Index j = 0; j < samples.cols(); ++j) {
            if (samples(a, j) != samples(b, j)) return samples(a, j) < samples(b, j);
        }
        return false;
    });
    Mat out(samples.rows(), samples.cols());
    for (Index i = 0; i < samples.rows(); ++i) out.row(i) = samples.row(idx[static_cast<std::size_t>(i)]);
    return out;
}

struct Kernel {
    Mat l_inv; // inverse of the lower Cholesky factor of H
    double log_norm;
};

Kernel make_kernel(const KdeModel &m) {
    Eigen::LLT<Mat> llt(m.bandwidth);
    if (llt.info() != Eigen::Success) throw BandwidthError("kde: bandwidth is not positive definite");
    Mat l = llt.matrixL();
    Mat l_inv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(l.rows(), l.cols()));
    double logdet = 2.0 * l.diagonal().array().log().sum();
    double d = static_cast<double>(m.dim());
    return {l_inv, -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - std::log(static_cast<double>(m.size()))};
}

double eval_with(const KdeModel &m, const Kernel &k, const Eigen::Ref<const Vec> &x) {
    const Index n = m.size();
    double acc = 0;
    if (m.dim() == 1) {
        const double inv = k.l_inv(0, 0);
        for (Index i = 0; i < n; ++i) {
            double z = (x(0) - m.samples(i, 0)) * inv;
            acc += std::exp(-0.5 * z * z);
        }
    } else {
        Vec z;
        for (Index i = 0; i < n; ++i) {
            z = k.l_inv * (x - m.samples.row(i).transpose());
            acc += std::exp(-0.5 * z.squaredNorm());
        }
    }
    return std::exp(k.log_norm) * acc;
}

struct Axes {
    std::vector<Vec> nodes;
};

Axes make_axes(const KdeModel &m, const GridSpec &spec) {
    if (spec.points < 2) throw ParameterError("grid: need at least 2 points per dimension");
    if (!(spec.pad >= 0)) throw ParameterError("grid: pad must be non-negative");
    Axes ax;
    Vec h = m.scales();
    for (Index j = 0; j < m.dim(); ++j) {
        double lo = m.samples.col(j).minCoeff() - spec.pad * h(j);
        double hi = m.samples.col(j).maxCoeff() + spec.pad * h(j);
        Vec nodes(spec.points);
        double step = (hi - lo) / static_cast<double>(spec.points - 1);
        for (Index i = 0; i < spec.points; ++i) nodes(i) = lo + static_cast<double>(i) * step;
        ax.nodes.push_back(std::move(nodes));
    }
    return ax;
}

} // namespace

Vec scott_bandwidth(const Mat &samples) {
    const Index n = samples.rows();
    const Index d = samples.cols();
    if (n < 2) throw EmptyInputError("kde: need at least 2 samples");
    if (!samples.allFinite()) throw NumericError("kde: non-finite samples");
    double factor = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
    Vec h(d);
    for (Index j = 0; j < d; ++j) {
        double mean = samples.col(j).mean();
        double var = (samples.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
        if (!(var > 0)) throw BandwidthError("kde: samples have zero variance in dimension " + std::to_string(j));
        h(j) = factor * std::sqrt(var);
    }
    return h;
}

KdeModel kde_fit(const Mat &samples, std::optional<Mat> bandwidth) {
    if (samples.rows() < 2) throw EmptyInputError("kde: need at least 2 samples");
    if (samples.cols() < 1) throw ShapeError("kde: samples have no columns");
    if (!samples.allFinite()) throw NumericError("kde: non-finite samples");
    KdeModel m;
    m.samples = sorted_rows(samples);
    if (bandwidth) {
        if (bandwidth->rows() != samples.cols() || bandwidth->cols() != samples.cols()) {
            throw ShapeError("kde: bandwidth dimension mismatch");
        }
        m.bandwidth = *bandwidth;
    } else {
        Vec h = scott_bandwidth(samples);
        m.bandwidth = h.array().square().matrix().asDiagonal();
    }
    make_kernel(m);
    return m;
}

KdeModel kde_fit(std::span<const double> samples, std::optional<double> h) {
    Mat s = Eigen::Map<const Vec>(samples.data(), static_cast<Index>(samples.size()));
    if (!h) return kde_fit(s);
    if (!(*h > 0) || !std::isfinite(*h)) throw BandwidthError("kde: bandwidth must be positive");
    return kde_fit(s, Mat::Constant(1, 1, *h * *h));
}

double kde_evaluate(const KdeModel &model, const Eigen::Ref<const Vec> &x) {
    if (x.size() != model.dim()) throw ShapeError("kde_evaluate: point dimension mismatch");
    return eval_with(model, make_kernel(model), x);
}

DensityGrid density_grid(const KdeModel &model, const GridSpec &spec, Executor &exec) {
    if (model.dim() != 1) throw ShapeError("density_grid: model is not one-dimensional");
    Axes ax = make_axes(model, spec);
    Kernel k = make_kernel(model);
    DensityGrid g;
    g.x.assign(ax.nodes[0].data(), ax.nodes[0].data() + ax.nodes[0].size());
    g.density.resize(g.x.size());
    exec.for_range(g.x.size(), [&](std::size_t lo, std::size_t hi) {
        Vec p(1);
        for (std::size_t i = lo; i < hi; ++i) {
            p(0) = g.x[i];
            g.density[i] = eval_with(model, k, p);
        }
    });
    auto best = std::max_element(g.density.begin(), g.density.end());
    g.argmax = g.x[static_cast<std::size_t>(best - g.density.begin())];
    return g;
}

double trapezoid(const DensityGrid &grid) {
    double acc = 0;
    for (std::size_t i = 1; i < grid.x.size(); ++i) {
        acc += 0.5 * (grid.density[i] + grid.density[i - 1]) * (grid.x[i] - grid.x[i - 1]);
    }
    return acc;
}

ModeResult kde_mode(const KdeModel &model, const GridSpec &spec, Executor &exec) {
    if (spec.points < 256) throw ParameterError("kde_mode: grid resolution must be at least 256 per dimension");
    const Index d = model.dim();
    Axes ax = make_axes(model, spec);
    Kernel k = make_kernel(model);
    const Index per = spec.points;
    std::size_t total = 1;
    for (Index j = 0; j < d; ++j) total *= static_cast<std::size_t>(per);

    // Flat index with dimension 0 most significant, so ascending index is lexicographic order.
    auto node = [&](std::size_t flat, Vec &x, std::vector<Index> *coords = nullptr) {
        for (Index j = d - 1; j >= 0; --j) {
            Index c = static_cast<Index>(flat % static_cast<std::size_t>(per));
            flat /= static_cast<std::size_t>(per);
            x(j) = ax.nodes[static_cast<std::size_t>(j)](c);
            if (coords) (*coords)[static_cast<std::size_t>(j)] = c;
        }
    };
    std::vector<double> dens(total);
    exec.for_range(total, [&](std::size_t lo, std::size_t hi) {
        Vec x(d);
        for (std::size_t f = lo; f < hi; ++f) {
            node(f, x);
            dens[f] = eval_with(model, k, x);
        }
    });
    const double top = *std::max_element(dens.begin(), dens.end());
    std::vector<std::size_t> ties;
    for (std::size_t f = 0; f < total; ++f) {
        if (dens[f] >= top - 1e-12) ties.push_back(f);
    }

    ModeResult res;
    Vec x(d);
    std::vector<Index> first(static_cast<std::size_t>(d)), other(static_cast<std::size_t>(d));
    node(ties.front(), x, &first);
    for (std::size_t t = 1; t < ties.size() && !res.multimodal; ++t) {
        node(ties[t], x, &other);
        for (Index j = 0; j < d; ++j) {
            if (std::abs(other[static_cast<std::size_t>(j)] - first[static_cast<std::size_t>(j)]) > 1) res.multimodal = true;
        }
    }
    node(ties.front(), x);
    double best = dens[ties.front()];

    // Golden-section refinement, one coordinate at a time, within one grid cell either side.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (Index j = 0; j < d; ++j) {
        const Vec &nodes = ax.nodes[static_cast<std::size_t>(j)];
        double step = nodes(1) - nodes(0);
        double a = x(j) - step, b = x(j) + step;
        auto f = [&](double v) {
            Vec y = x;
            y(j) = v;
            return eval_with(model, k, y);
        };
        double c1 = b - inv_phi * (b - a), c2 = a + inv_phi * (b - a);
        double f1 = f(c1), f2 = f(c2);
        double best_v = x(j);
        auto consider = [&](double v, double fv) {
            if (fv > best) {
                best = fv;
                best_v = v;
            }
        };
        consider(c1, f1);
        consider(c2, f2);
        for (int it = 0; it < 3; ++it) {
            if (f1 >= f2) {
                b = c2;
                c2 = c1;
                f2 = f1;
                c1 = b - inv_phi * (b - a);
                f1 = f(c1);
                consider(c1, f1);
            } else {
                a = c1;
                c1 = c2;
                f1 = f2;
                c2 = a + inv_phi * (b - a);
                f2 = f(c2);
                consider(c2, f2);
            }
        }
        x(j) = best_v;
    }
    res.mode = x;
    res.density = best;
    return res;
}

const MarginalSummary &PosteriorSummary::get(const std::string &name) const {
    for (const auto &m : marginals) {
        if (m.name == name) return m;
    }
    throw ParameterError("summary has no parameter named " + name);
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw EmptyInputError("quantile: no values");
    if (!(q >= 0 && q <= 1)) throw ParameterError("quantile: q outside [0, 1]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

std::vector<std::pair<std::string, std::vector<double>>> marginal_series(const ParamSamples &s) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    if (s.size() == 0) return out;
    const Index p = s.K.front().size();
    for (Index k = 0; k < p; ++k) {
        std::vector<double> v;
        v.reserve(s.size());
        for (const auto &kk : s.K) v.push_back(kk(k));
        out.emplace_back("K" + std::to_string(k + 1), std::move(v));
    }
    std::vector<double> last;
    last.reserve(s.size());
    for (const auto &kk : s.K) last.push_back(1.0 - kk.sum());
    out.emplace_back("K" + std::to_string(p + 1), std::move(last));
    out.emplace_back("rho", s.rho);
    for (Index r = 0; r < p; ++r) {
        for (Index c = r; c < p; ++c) {
            std::vector<double> v;
            v.reserve(s.size());
            for (const auto &l : s.Lambda) v.push_back(l(r, c));
            out.emplace_back("Lambda_" + std::to_string(r + 1) + std::to_string(c + 1), std::move(v));
        }
    }
    return out;
}

MarginalSummary summarize_series(const std::string &name, std::span<const double> values, const SummaryOptions &opts,
                                 Executor &exec) {
    if (values.size() < 2) throw EmptyInputError("summarize: need at least 2 values for " + name);
    MarginalSummary m;
    m.name = name;
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    m.lower = quantile(values, 0.025);
    m.upper = quantile(values, 0.975);
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (*mn == *mx) {
        m.constant = true;
        m.mode = m.mean = *mn;
        return m;
    }
    Mat s = Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
    double h = scott_bandwidth(s)(0) * opts.bandwidth_factor;
    KdeModel kde = kde_fit(values, h);
    ModeResult mode = kde_mode(kde, opts.grid, exec);
    m.mode = mode.mode(0);
    m.multimodal = mode.multimodal;
    return m;
}

PosteriorSummary summarize(const ParamSamples &samples, const SummaryOptions &opts, Executor &exec) {
    if (samples.size() < 100) throw EmptyInputError("summarize: need at least 100 samples");
    if (samples.K.size() != samples.size() || samples.Lambda.size() != samples.size()) {
        throw ShapeError("summarize: sample sequences differ in length");
    }
    PosteriorSummary out;
    const Index n_full = samples.K.front().size() + 1;
    out.full_weights_mode.resize(n_full);
    out.full_weights_mean.resize(n_full);
    Index k = 0;
    for (auto &[name, v] : marginal_series(samples)) {
        out.marginals.push_back(summarize_series(name, v, opts, exec));
        if (k < n_full) {
            out.full_weights_mode(k) = out.marginals.back().mode;
            out.full_weights_mean(k) = out.marginals.back().mean;
            ++k;
        }
    }
    return out;
}

} // namespace subpop
