#pragma once
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "subpop/analysis.hpp"
#include "subpop/boolnet.hpp"
#include "subpop/em.hpp"
#include "subpop/gibbs.hpp"
#include "subpop/vb.hpp"

namespace subpop {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// Dataset CSV: header `r,d_1,...,d_N`, one row per gene, raw profiles.
void write_dataset_csv(std::ostream &out, const Dataset &ds);
void write_dataset_csv(const std::string &path, const Dataset &ds);
Dataset read_dataset_csv(std::istream &in, const std::string &source = "<dataset>");
Dataset read_dataset_csv(const std::string &path);

struct Truth {
    ModelParams params;
    std::uint64_t seed = 0;
};

void write_truth_json(const std::string &path, const Truth &truth);
Truth read_truth_json(const std::string &path);

/// JSON object with any of a0, b0, q0, n0, K0, Lambda0; missing fields take
/// default_hyperparams(N).
HyperParams read_hyperparams_json(const std::string &path, Index N);
void write_hyperparams_json(const std::string &path, const HyperParams &hp);

/// Profiles CSV: header `gene,stimulus,output,d_1,...,d_N`.
void write_profiles_csv(const std::string &path, const std::vector<LabeledProfile> &profiles);
std::vector<ExpressionProfile> read_profiles_csv(const std::string &path);

/// Matrix as a JSON array of rows.
std::string matrix_json(const Mat &m);

/// `iteration,elbo,delta_K0K,delta_rho,delta_Lambda`
void write_vb_trace_csv(const std::string &path, const VbTrace &trace);
/// `iteration,loglik,K_1..K_{N-1},rho`
void write_em_trace_csv(const std::string &path, const std::vector<EmTraceRow> &trace);

/// `iteration,K_1..K_{N-1},rho,Lambda_rc (r <= c)`; `iteration` empty means 1..n.
void write_samples_csv(const std::string &path, const ParamSamples &samples, const std::vector<long> &iteration = {});
ParamSamples read_samples_csv(const std::string &path);

/// `x,density`
void write_density_csv(const std::string &path, const DensityGrid &grid);

void write_text(const std::string &path, const std::string &text);

} // namespace subpop
