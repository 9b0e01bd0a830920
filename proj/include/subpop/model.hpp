#pragma once
#include <vector>

#include "subpop/linalg.hpp"
#include "subpop/rng.hpp"

namespace subpop {

/// Per-network activity of one gene-linked output (length N).
struct ExpressionProfile {
    Vec d;
};

struct RawRecord {
    double r;
    ExpressionProfile profile;
};

/** Observed layer of the model: one measurement per gene.
 *
 * With d_i the raw profile of gene i, mu_i = d_{i,N} and
 * D_i = (d_{i,1} - d_{i,N}, ..., d_{i,N-1} - d_{i,N}).
 */
struct Dataset {
    Index V = 0;
    Index N = 0;
    Vec r;
    Vec mu;
    MatBatch D; // V items of (N-1) x 1

    Index dim() const { return N - 1; }
    /// Throws ShapeError when lengths disagree.
    void validate() const;
};

/// Fixed prior constants.
struct HyperParams {
    double a0 = 0.5;
    double b0 = 0.5;
    double q0 = 0.001;
    long n0 = 1;
    Vec K0;
    Mat Lambda0;

    void validate() const;
};

/// Point values of the unknowns.
struct ModelParams {
    Vec K;
    Mat Lambda;
    double rho = 1.0;

    void validate() const;
};

Dataset transform(const std::vector<RawRecord> &records);

/// Raw profiles reconstructed from (mu, D): d_{i,N} = mu_i, d_{i,q} = D_{i,q} + mu_i.
std::vector<ExpressionProfile> reconstruct_profiles(const Dataset &ds);

/// The precision matrix used in the three-network synthetic experiment.
Mat paper_lambda();

HyperParams default_hyperparams(Index N);

/** Uniform draws from {0,1}^N excluding the two constant vectors, or from all of
 * {0,1}^N when `include_constant` is set.
 */
std::vector<ExpressionProfile> random_binary_profiles(RngStream &rng, Index V, Index N, bool include_constant = false);

enum class SynthNoise { Full, None };

/** beta_i ~ N(K, Lambda^-1), r_i ~ N(D_i^T beta_i + mu_i, 1/rho).  SynthNoise::None
 * sets beta_i = K and drops the measurement noise.
 */
Dataset synth_generate(RngStream &rng, const ModelParams &truth, const std::vector<ExpressionProfile> &profiles,
                       SynthNoise noise = SynthNoise::Full);

/// sum_i log N(r_i | D_i^T K + mu_i, 1/rho + D_i^T Lambda^-1 D_i)
double marginal_loglik(const Dataset &ds, const ModelParams &p, Executor &exec = Executor::serial());

/// Gradient of marginal_loglik with respect to K.
Vec marginal_loglik_grad_K(const Dataset &ds, const ModelParams &p);

/// Draws of (K, Lambda, rho), one entry per draw.
struct ParamSamples {
    std::vector<Vec> K;
    std::vector<Mat> Lambda;
    std::vector<double> rho;

    std::size_t size() const { return rho.size(); }
    void reserve(std::size_t n) {
        K.reserve(n);
        Lambda.reserve(n);
        rho.reserve(n);
    }
};

/// Appends 1 - sum(K).
Vec full_weights(const Eigen::Ref<const Vec> &K);

} // namespace subpop
