#include "subpop/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "subpop/analysis.hpp"
#include "subpop/boolnet.hpp"
#include "subpop/em.hpp"
#include "subpop/gibbs.hpp"
#include "subpop/io.hpp"
#include "subpop/vb.hpp"

namespace subpop {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Raised for invalid flag values or combinations.
class UsageError : public Error {
    public:
        using Error::Error;
};

std::vector<double> parse_list(const std::string &text, const std::string &flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception &) {
            throw UsageError(flag + ": not a number list: " + text);
        }
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::vector<std::string> parse_names(const std::string &text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

json to_json(const Vec &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Mat &m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json to_json(const PosteriorSummary &s) {
    json marg = json::array();
    for (const auto &m : s.marginals) {
        marg.push_back({{"name", m.name},
                        {"mode", m.mode},
                        {"mean", m.mean},
                        {"lower95", m.lower},
                        {"upper95", m.upper},
                        {"multimodal", m.multimodal},
                        {"constant", m.constant}});
    }
    return {{"full_weights_mode", to_json(s.full_weights_mode)},
            {"full_weights_mean", to_json(s.full_weights_mean)},
            {"marginals", marg}};
}

std::string sidecar_path(const std::string &out) {
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + ".truth.json")).string();
}

unsigned default_workers() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return workers_from_env(hw);
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
    long genes = 4000;
    long networks = 3;
    std::string true_k;
    double rho = 100.0;
    std::string lambda = "paper";
    std::string profiles = "random";
    std::uint64_t seed = 1;
    std::string out;
};

Mat read_lambda_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ParseError(path, 0, e.what());
    }
    if (j.is_object()) j = j.at("Lambda");
    Mat m(static_cast<Index>(j.size()), static_cast<Index>(j.at(0).size()));
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

int cmd_synth(const SynthOptions &o) {
    std::vector<ExpressionProfile> profiles;
    Index N = o.networks;
    if (o.profiles == "random" || o.profiles == "random-all") {
        if (o.genes < 1) throw UsageError("--genes must be at least 1");
        if (N < 2) throw UsageError("--networks must be at least 2");
        RngStream prng(o.seed, 1);
        profiles = random_binary_profiles(prng, o.genes, N, o.profiles == "random-all");
    } else {
        auto bundle = read_profiles_csv(o.profiles);
        N = bundle.front().d.size();
        if (o.genes < 1) throw UsageError("--genes must be at least 1");
        // Genes cycle through the profile rows.
        for (long i = 0; i < o.genes; ++i) profiles.push_back(bundle[static_cast<std::size_t>(i) % bundle.size()]);
    }
    if (!(o.rho > 0)) throw UsageError("--rho must be positive");
    ModelParams truth;
    if (o.true_k.empty()) {
        if (N != 3) throw UsageError("--true-k is required unless N = 3");
        truth.K = Vec(2);
        truth.K << 0.1, 0.3;
    } else {
        auto k = parse_list(o.true_k, "--true-k");
        if (static_cast<Index>(k.size()) != N - 1) throw UsageError("--true-k needs N - 1 = " + std::to_string(N - 1) + " values");
        truth.K = Eigen::Map<Vec>(k.data(), N - 1);
    }
    if (o.lambda == "paper") {
        if (N != 3) throw UsageError("--lambda paper requires N = 3");
        truth.Lambda = paper_lambda();
    } else {
        truth.Lambda = read_lambda_file(o.lambda);
        if (truth.Lambda.rows() != N - 1 || truth.Lambda.cols() != N - 1) throw UsageError("--lambda matrix must be (N-1)x(N-1)");
    }
    truth.rho = o.rho;
    try {
        truth.validate();
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
    RngStream rng(o.seed, 2);
    Dataset ds = synth_generate(rng, truth, profiles);
    write_dataset_csv(o.out, ds);
    write_truth_json(sidecar_path(o.out), {truth, o.seed});
    return kExitOk;
}

// ---------------------------------------------------------------- profiles

struct ProfilesOptions {
    std::string netlist, faults, stimuli, gene_map, out;
};

int cmd_profiles(const ProfilesOptions &o) {
    auto fault_paths = parse_names(o.faults);
    auto stim_paths = parse_names(o.stimuli);
    if (fault_paths.empty()) throw UsageError("--faults needs at least one fault file");
    if (stim_paths.empty()) throw UsageError("--stimuli needs at least one stimulus file");
    BooleanNetwork net = BooleanNetwork::parse_file(o.netlist);
    std::vector<FaultMap> faults;
    for (const auto &p : fault_paths) faults.push_back(FaultMap::parse_file(p));
    std::vector<Stimulus> stimuli;
    for (const auto &p : stim_paths) stimuli.push_back(Stimulus::parse_file(p));
    GeneMap gm = parse_gene_map_file(o.gene_map);
    write_profiles_csv(o.out, profiles_for_ensemble(net, faults, stimuli, gm));
    return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
    std::string data;
    std::string method = "vb";
    std::string hyper;
    std::uint64_t seed = 1;
    std::string out = "fit_out";
    long max_iter = 1000;
    double rel_tol = -1; // method default when negative
    long iterations = 10000;
    long burn_in = -1; // iterations / 5 when negative
    long thin = 1;
    long samples = 10000;
    std::string init = "default";
    bool deterministic = true;
    unsigned workers = 0;
    double bandwidth_factor = 1.0;
};

json fit_config_json(const FitOptions &o) {
    return {{"data", o.data},
            {"method", o.method},
            {"hyper", o.hyper},
            {"seed", o.seed},
            {"max_iter", o.max_iter},
            {"rel_tol", o.rel_tol},
            {"iterations", o.iterations},
            {"burn_in", o.burn_in},
            {"thin", o.thin},
            {"samples", o.samples},
            {"init", o.init},
            {"deterministic", o.deterministic},
            {"bandwidth_factor", o.bandwidth_factor}};
}

void apply_config_json(FitOptions &o, const json &j) {
    auto get = [&](const char *key, auto &field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("data", o.data);
    get("method", o.method);
    get("hyper", o.hyper);
    get("seed", o.seed);
    get("max_iter", o.max_iter);
    get("rel_tol", o.rel_tol);
    get("iterations", o.iterations);
    get("burn_in", o.burn_in);
    get("thin", o.thin);
    get("samples", o.samples);
    get("init", o.init);
    get("deterministic", o.deterministic);
    get("bandwidth_factor", o.bandwidth_factor);
}

ModelParams read_em_init(const std::string &spec, const HyperParams &hp) {
    if (spec == "default") return em_default_init(hp);
    Truth t = read_truth_json(spec);
    return t.params;
}

int cmd_fit(FitOptions o) {
    if (o.method != "vb" && o.method != "gibbs" && o.method != "em") throw UsageError("--method must be vb, gibbs or em");
    if (o.max_iter < 1) throw UsageError("--max-iter must be at least 1");
    if (o.samples < 100 && o.method == "vb") throw UsageError("--samples must be at least 100");
    if (o.burn_in < 0) o.burn_in = o.iterations / 5;
    if (o.method == "gibbs" && (o.iterations <= o.burn_in || o.thin < 1)) {
        throw UsageError("gibbs needs iterations > burn-in >= 0 and thin >= 1");
    }
    if (o.method == "gibbs" && o.init != "default" && o.init != "prior" && o.init != "overdispersed") {
        throw UsageError("gibbs --init must be prior or overdispersed");
    }

    Dataset ds = read_dataset_csv(o.data);
    HyperParams hp = o.hyper.empty() ? default_hyperparams(ds.N) : read_hyperparams_json(o.hyper, ds.N);
    Executor exec({o.workers == 0 ? default_workers() : o.workers, o.deterministic, 256});
    fs::create_directories(o.out);
    const fs::path dir(o.out);

    json report;
    report["method"] = o.method;
    report["genes"] = ds.V;
    report["networks"] = ds.N;
    report["seed"] = o.seed;
    report["trace"] = "trace.csv";
    SummaryOptions sopt;
    sopt.bandwidth_factor = o.bandwidth_factor;

    const auto t0 = Clock::now();
    long iterations = 0;
    if (o.method == "vb") {
        VbStopping stop;
        stop.max_iter = o.max_iter;
        if (o.rel_tol >= 0) stop.rel_tol = o.rel_tol;
        VbFit fit = vb_fit(ds, hp, stop, exec);
        iterations = fit.iterations;
        RngStream rng(o.seed, 0);
        ParamSamples draws = vb_posterior_sample(rng, fit.state, hp, ds.V, static_cast<std::size_t>(o.samples));
        PosteriorSummary sum = summarize(draws, sopt, exec);
        Vec K = sum.full_weights_mode.head(ds.dim());
        report["estimator"] = "posterior mode";
        report["estimates"] = {{"K", to_json(K)},
                               {"full_weights", to_json(sum.full_weights_mode)},
                               {"rho", sum.get("rho").mode},
                               {"Lambda", to_json(fit.state.E_Lambda)}};
        report["variational"] = {{"a_rho", fit.state.a_rho},
                                 {"b_rho", fit.state.b_rho},
                                 {"K0K", to_json(fit.state.K0K)},
                                 {"Lambda0L", to_json(fit.state.Lambda0L)},
                                 {"elbo", fit.trace.back().elbo}};
        report["posterior"] = to_json(sum);
        report["converged"] = fit.converged;
        report["samples"] = "samples.csv";
        write_vb_trace_csv((dir / "trace.csv").string(), fit.trace);
        write_samples_csv((dir / "samples.csv").string(), draws);
    } else if (o.method == "gibbs") {
        GibbsConfig cfg;
        cfg.iterations = o.iterations;
        cfg.burn_in = o.burn_in;
        cfg.thin = o.thin;
        cfg.seed = o.seed;
        cfg.init = o.init == "overdispersed" ? GibbsInit::Overdispersed : GibbsInit::PriorMean;
        Chain chain = gibbs_run(ds, hp, cfg, exec);
        iterations = o.iterations;
        const ParamSamples &s = chain.samples;
        Vec K = Vec::Zero(ds.dim());
        Mat L = Mat::Zero(ds.dim(), ds.dim());
        double rho = 0;
        for (std::size_t t = 0; t < s.size(); ++t) {
            K += s.K[t];
            L += s.Lambda[t];
            rho += s.rho[t];
        }
        const double n = static_cast<double>(s.size());
        K /= n;
        L /= n;
        rho /= n;
        report["estimator"] = "posterior mean";
        report["estimates"] = {{"K", to_json(K)}, {"full_weights", to_json(full_weights(K))}, {"rho", rho}, {"Lambda", to_json(L)}};
        report["kept"] = s.size();
        if (s.size() >= 100) {
            report["posterior"] = to_json(summarize(s, sopt, exec));
            json diag = json::array();
            for (const auto &d : gibbs_diagnostics(chain)) {
                diag.push_back({{"name", d.name}, {"ess", d.ess}, {"rhat", d.rhat_defined ? json(d.rhat) : json(nullptr)}});
            }
            report["diagnostics"] = diag;
        }
        report["converged"] = nullptr;
        report["samples"] = "samples.csv";
        std::vector<long> all(static_cast<std::size_t>(o.iterations));
        for (long t = 0; t < o.iterations; ++t) all[static_cast<std::size_t>(t)] = t + 1;
        write_samples_csv((dir / "trace.csv").string(), chain.sweeps, all);
        write_samples_csv((dir / "samples.csv").string(), s, chain.iteration);
    } else {
        EmStopping stop;
        stop.max_iter = o.max_iter;
        if (o.rel_tol >= 0) stop.rel_tol = o.rel_tol;
        EmFit fit = em_fit(ds, read_em_init(o.init, hp), stop, exec);
        iterations = fit.iterations;
        report["estimator"] = "maximum likelihood";
        report["estimates"] = {{"K", to_json(fit.params.K)},
                               {"full_weights", to_json(full_weights(fit.params.K))},
                               {"rho", fit.params.rho},
                               {"Lambda", to_json(fit.params.Lambda)}};
        report["loglik"] = fit.trace.back().loglik;
        report["converged"] = fit.converged;
        write_em_trace_csv((dir / "trace.csv").string(), fit.trace);
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report["iterations"] = iterations;
    report["config"] = fit_config_json(o);
    report["timing"] = "timing.json";
    write_text((dir / "report.json").string(), report.dump(2) + "\n");
    json timing = {{"seconds", seconds},
                   {"per_iteration_seconds", iterations > 0 ? seconds / static_cast<double>(iterations) : 0.0},
                   {"workers", exec.workers()},
                   {"deterministic", exec.deterministic()}};
    write_text((dir / "timing.json").string(), timing.dump(2) + "\n");
    std::cout << "full weights:";
    for (const auto &w : report["estimates"]["full_weights"]) std::cout << ' ' << w.get<double>();
    std::cout << "\nrho: " << report["estimates"]["rho"].get<double>() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- density

struct DensityOptions {
    std::string samples, out = "density_out";
    double bandwidth_factor = 1.0;
    long grid = 257;
};

int cmd_density(const DensityOptions &o) {
    if (o.grid < 256) throw UsageError("--grid must be at least 256");
    if (!(o.bandwidth_factor > 0)) throw UsageError("--bandwidth-factor must be positive");
    ParamSamples s = read_samples_csv(o.samples);
    SummaryOptions sopt;
    sopt.bandwidth_factor = o.bandwidth_factor;
    sopt.grid.points = o.grid;
    PosteriorSummary sum = summarize(s, sopt);
    fs::create_directories(o.out);
    json files = json::object();
    for (auto &[name, values] : marginal_series(s)) {
        const MarginalSummary &m = sum.get(name);
        if (m.constant) continue;
        Mat col = Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
        double h = scott_bandwidth(col)(0) * o.bandwidth_factor;
        KdeModel kde = kde_fit(values, h);
        const std::string file = "density_" + name + ".csv";
        write_density_csv((fs::path(o.out) / file).string(), density_grid(kde, sopt.grid));
        files[name] = file;
    }
    json out = to_json(sum);
    out["files"] = files;
    write_text((fs::path(o.out) / "modes.json").string(), out.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
    std::string sizes = "4000,5000,6000,7000,8000";
    std::string method = "vb";
    long iterations = 20;
    std::string modes = "serial,parallel";
    unsigned workers = 0;
    long reps = 5;
    std::uint64_t seed = 1;
    std::string out;
};

// Final estimates of one run, flattened for the agreement check.
std::vector<double> bench_run(const Dataset &ds, const HyperParams &hp, const std::string &method, long iterations,
                              std::uint64_t seed, Executor &exec) {
    std::vector<double> out;
    auto push = [&](const Vec &K, double rho, const Mat &L) {
        out.assign(K.data(), K.data() + K.size());
        out.push_back(rho);
        out.insert(out.end(), L.data(), L.data() + L.size());
    };
    if (method == "vb") {
        VbStopping stop;
        stop.max_iter = iterations;
        stop.rel_tol = 0;
        stop.use_elbo = false;
        stop.param_tol = 0;
        VbFit fit = vb_fit(ds, hp, stop, exec);
        push(fit.state.K0K, fit.state.E_rho, fit.state.Lambda0L_inv);
    } else if (method == "em") {
        EmStopping stop;
        stop.max_iter = iterations;
        stop.rel_tol = 0;
        EmFit fit = em_fit(ds, em_default_init(hp), stop, exec);
        push(fit.params.K, fit.params.rho, fit.params.Lambda);
    } else {
        GibbsConfig cfg;
        cfg.iterations = iterations;
        cfg.burn_in = 0;
        cfg.seed = seed;
        Chain chain = gibbs_run(ds, hp, cfg, exec);
        push(chain.samples.K.back(), chain.samples.rho.back(), chain.samples.Lambda.back());
    }
    return out;
}

double max_rel_diff(const std::vector<double> &a, const std::vector<double> &b) {
    double worst = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double scale = std::max({std::abs(a[k]), std::abs(b[k]), 1e-300});
        worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
    }
    return worst;
}

int cmd_bench(const BenchOptions &o) {
    if (o.method != "vb" && o.method != "gibbs" && o.method != "em") throw UsageError("--method must be vb, gibbs or em");
    if (o.iterations < 1 || o.reps < 1) throw UsageError("--iterations and --reps must be at least 1");
    std::vector<long> sizes;
    for (double s : parse_list(o.sizes, "--sizes")) {
        if (s < 1 || s != std::floor(s)) throw UsageError("--sizes must be positive integers");
        sizes.push_back(static_cast<long>(s));
    }
    auto modes = parse_names(o.modes);
    for (const auto &m : modes) {
        if (m != "serial" && m != "parallel" && m != "fast") throw UsageError("--modes entries must be serial, parallel or fast");
    }
    if (modes.empty()) throw UsageError("--modes is empty");
    const unsigned workers = o.workers == 0 ? default_workers() : o.workers;

    struct Row {
        long size;
        std::string mode;
        unsigned workers;
        double seconds;
    };
    std::vector<Row> rows;
    for (long V : sizes) {
        RngStream prng(o.seed, 1), rng(o.seed, 2);
        ModelParams truth{Vec(2), paper_lambda(), 100.0};
        truth.K << 0.1, 0.3;
        Dataset ds = synth_generate(rng, truth, random_binary_profiles(prng, V, 3));
        HyperParams hp = default_hyperparams(3);

        std::vector<double> reference;
        for (const auto &mode : modes) {
            Executor exec({mode == "serial" ? 1u : workers, mode != "fast", 256});
            // Warm-up run doubles as the correctness gate.
            std::vector<double> est = bench_run(ds, hp, o.method, o.iterations, o.seed, exec);
            if (reference.empty()) {
                reference = est;
            } else if (double d = max_rel_diff(reference, est); d > 1e-8) {
                std::cerr << "bench: " << mode << " estimates differ from " << modes.front() << " by " << d
                          << " (relative) at V = " << V << '\n';
                return kExitBenchMismatch;
            }
            std::vector<double> times;
            for (long r = 0; r < o.reps; ++r) {
                auto t0 = Clock::now();
                bench_run(ds, hp, o.method, o.iterations, o.seed, exec);
                times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
            }
            std::sort(times.begin(), times.end());
            double median = times.size() % 2 ? times[times.size() / 2]
                                             : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
            rows.push_back({V, mode, exec.workers(), median});
        }
    }

    std::ostringstream csv;
    csv << "size,mode,workers,seconds,per_iter_seconds,speedup\n";
    for (const auto &r : rows) {
        double serial = r.seconds;
        for (const auto &q : rows) {
            if (q.size == r.size && q.mode == "serial") serial = q.seconds;
        }
        csv << r.size << ',' << r.mode << ',' << r.workers << ',' << format_double(r.seconds) << ','
            << format_double(r.seconds / static_cast<double>(o.iterations)) << ',' << format_double(serial / r.seconds) << '\n';
    }
    if (o.out.empty()) {
        std::cout << csv.str();
    } else {
        write_text(o.out, csv.str());
    }
    return kExitOk;
}

int dispatch(int argc, const char *const *argv) {
    CLI::App app{"Subpopulation weight estimation for heterogeneous tissue"};
    app.require_subcommand(1);

    SynthOptions so;
    auto *synth = app.add_subcommand("synth", "Generate a synthetic dataset and its truth sidecar");
    synth->add_option("--genes", so.genes, "Number of genes V")->capture_default_str();
    synth->add_option("--networks", so.networks, "Number of networks N")->capture_default_str();
    synth->add_option("--true-k", so.true_k, "Comma-separated K (N-1 values); default 0.1,0.3 for N = 3");
    synth->add_option("--rho", so.rho, "Measurement precision")->capture_default_str();
    synth->add_option("--lambda", so.lambda, "'paper' or a JSON file holding the precision matrix")->capture_default_str();
    synth->add_option("--profiles", so.profiles, "'random', 'random-all' (constant profiles allowed) or a profiles CSV")->capture_default_str();
    synth->add_option("--seed", so.seed, "Random seed")->capture_default_str();
    synth->add_option("--out", so.out, "Dataset CSV path")->required();

    ProfilesOptions po;
    auto *profiles = app.add_subcommand("profiles", "Expression profiles from a netlist and fault ensemble");
    profiles->add_option("--netlist", po.netlist, "Netlist file")->required();
    profiles->add_option("--faults", po.faults, "Comma-separated fault files, one per network")->required();
    profiles->add_option("--stimuli", po.stimuli, "Comma-separated stimulus files")->required();
    profiles->add_option("--gene-map", po.gene_map, "Output-to-gene map file")->required();
    profiles->add_option("--out", po.out, "Profiles CSV path")->required();

    FitOptions fo;
    std::string config_path;
    bool fast = false;
    auto *fit = app.add_subcommand("fit", "Fit the model with vb, gibbs or em");
    auto *f_data = fit->add_option("--data", fo.data, "Dataset CSV");
    auto *f_method = fit->add_option("--method", fo.method, "vb | gibbs | em")->capture_default_str();
    auto *f_hyper = fit->add_option("--hyper", fo.hyper, "Hyperparameter JSON (defaults when omitted)");
    auto *f_seed = fit->add_option("--seed", fo.seed, "Random seed")->capture_default_str();
    fit->add_option("--out", fo.out, "Output directory")->capture_default_str();
    auto *f_max = fit->add_option("--max-iter", fo.max_iter, "vb/em iteration cap")->capture_default_str();
    auto *f_tol = fit->add_option("--rel-tol", fo.rel_tol, "vb/em relative tolerance (1e-8 vb, 1e-10 em)");
    auto *f_iter = fit->add_option("--iterations", fo.iterations, "gibbs sweeps")->capture_default_str();
    auto *f_burn = fit->add_option("--burn-in", fo.burn_in, "gibbs burn-in (default iterations/5)");
    auto *f_thin = fit->add_option("--thin", fo.thin, "gibbs thinning")->capture_default_str();
    auto *f_samples = fit->add_option("--samples", fo.samples, "vb posterior draws")->capture_default_str();
    auto *f_init = fit->add_option("--init", fo.init, "em: 'default' or truth-style JSON; gibbs: prior | overdispersed");
    auto *f_bw = fit->add_option("--bandwidth-factor", fo.bandwidth_factor, "Scales Scott's KDE bandwidth")->capture_default_str();
    fit->add_option("--workers", fo.workers, "Worker threads (default SUBPOP_WORKERS or all cores)");
    auto *f_det = fit->add_flag("--deterministic", "Fixed reduction order (default)");
    auto *f_fast = fit->add_flag("--fast", fast, "Per-worker reduction order");
    fit->add_option("--config", config_path, "JSON config echo from a previous report");
    f_det->excludes(f_fast);

    DensityOptions dop;
    auto *density = app.add_subcommand("density", "Marginal density grids and modes from a samples CSV");
    density->add_option("--samples", dop.samples, "Samples CSV")->required();
    density->add_option("--out", dop.out, "Output directory")->capture_default_str();
    density->add_option("--bandwidth-factor", dop.bandwidth_factor, "Scales Scott's bandwidth")->capture_default_str();
    density->add_option("--grid", dop.grid, "Grid points per marginal")->capture_default_str();

    BenchOptions bo;
    auto *bench = app.add_subcommand("bench", "Serial versus parallel timing sweep");
    bench->add_option("--sizes", bo.sizes, "Comma-separated gene counts")->capture_default_str();
    bench->add_option("--method", bo.method, "vb | gibbs | em")->capture_default_str();
    bench->add_option("--iterations", bo.iterations, "Iterations per run")->capture_default_str();
    bench->add_option("--modes", bo.modes, "Comma-separated: serial, parallel, fast")->capture_default_str();
    bench->add_option("--workers", bo.workers, "Parallel worker threads (default SUBPOP_WORKERS or all cores)");
    bench->add_option("--reps", bo.reps, "Timed repetitions after one warm-up")->capture_default_str();
    bench->add_option("--seed", bo.seed, "Dataset seed")->capture_default_str();
    bench->add_option("--out", bo.out, "CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (*synth) return cmd_synth(so);
    if (*profiles) return cmd_profiles(po);
    if (*density) return cmd_density(dop);
    if (*bench) return cmd_bench(bo);

    if (!config_path.empty()) {
        // Explicit flags win over the echoed config.
        FitOptions flags = fo;
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open " + config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error &e) {
            throw ParseError(config_path, 0, e.what());
        }
        if (j.contains("config")) j = j.at("config");
        apply_config_json(fo, j);
        auto keep = [&](CLI::Option *opt, auto &field, const auto &value) {
            if (opt->count() > 0) field = value;
        };
        keep(f_data, fo.data, flags.data);
        keep(f_method, fo.method, flags.method);
        keep(f_hyper, fo.hyper, flags.hyper);
        keep(f_seed, fo.seed, flags.seed);
        keep(f_max, fo.max_iter, flags.max_iter);
        keep(f_tol, fo.rel_tol, flags.rel_tol);
        keep(f_iter, fo.iterations, flags.iterations);
        keep(f_burn, fo.burn_in, flags.burn_in);
        keep(f_thin, fo.thin, flags.thin);
        keep(f_samples, fo.samples, flags.samples);
        keep(f_init, fo.init, flags.init);
        keep(f_bw, fo.bandwidth_factor, flags.bandwidth_factor);
        if (f_det->count() > 0) fo.deterministic = true;
        if (f_fast->count() > 0) fo.deterministic = false;
    } else {
        fo.deterministic = !fast;
    }
    if (fo.data.empty()) throw UsageError("fit needs --data (or a --config naming it)");
    return cmd_fit(fo);
}

} // namespace

int run_cli(int argc, const char *const *argv) {
    try {
        return dispatch(argc, argv);
    } catch (const UsageError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError &e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ParseError &e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError &e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const GraphError &e) {
        std::cerr << "network error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

int run_cli(const std::vector<std::string> &args) {
    std::vector<const char *> argv{"subpop"};
    for (const auto &a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace subpop
