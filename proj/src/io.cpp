#include "subpop/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace subpop {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

void finish(std::ofstream &out, const std::string &path) {
    out.flush();
    if (!out) throw IoError("write failed for " + path);
}

std::vector<std::string> split(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string &text, const std::string &source, std::size_t line) {
    std::size_t b = text.find_first_not_of(" \t");
    std::size_t e = text.find_last_not_of(" \t");
    if (b == std::string::npos) throw ParseError(source, line, "empty field");
    const char *first = text.data() + b;
    const char *last = text.data() + e + 1;
    if (*first == '+') ++first;
    double v = 0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ParseError(source, line, "not a number: '" + text + "'");
    return v;
}

json matrix_to_json(const Mat &m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Mat matrix_from_json(const json &j, const std::string &what) {
    if (!j.is_array() || j.empty()) throw ParseError(what, 0, "expected a non-empty array of rows");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.at(0).size());
    Mat m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<Index>(j[r].size()) != cols) throw ParseError(what, 0, "ragged matrix");
        for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Vec vector_from_json(const json &j, const std::string &what) {
    if (!j.is_array() || j.empty()) throw ParseError(what, 0, "expected a non-empty array");
    Vec v(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = j[k].get<double>();
    return v;
}

json parse_json_file(const std::string &path) {
    std::ifstream in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ParseError(path, 0, e.what());
    }
}

} // namespace

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw NumericError("format_double: conversion failed");
    return std::string(buf, ptr);
}

std::string matrix_json(const Mat &m) { return matrix_to_json(m).dump(); }

void write_dataset_csv(std::ostream &out, const Dataset &ds) {
    ds.validate();
    out << "r";
    for (Index q = 1; q <= ds.N; ++q) out << ",d_" << q;
    out << '\n';
    auto profiles = reconstruct_profiles(ds);
    for (Index i = 0; i < ds.V; ++i) {
        out << format_double(ds.r(i));
        const Vec &d = profiles[static_cast<std::size_t>(i)].d;
        for (Index q = 0; q < ds.N; ++q) out << ',' << format_double(d(q));
        out << '\n';
    }
}

void write_dataset_csv(const std::string &path, const Dataset &ds) {
    auto out = open_out(path);
    write_dataset_csv(out, ds);
    finish(out, path);
}

Dataset read_dataset_csv(std::istream &in, const std::string &source) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
    ++lineno;
    auto header = split(line);
    if (header.size() < 3 || header[0] != "r") throw ParseError(source, lineno, "header must be r,d_1,...,d_N with N >= 2");
    for (std::size_t q = 1; q < header.size(); ++q) {
        if (header[q] != "d_" + std::to_string(q)) throw ParseError(source, lineno, "unexpected column '" + header[q] + "'");
    }
    const Index N = static_cast<Index>(header.size() - 1);
    std::vector<RawRecord> records;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        if (static_cast<Index>(fields.size()) != N + 1) {
            throw ParseError(source, lineno, "expected " + std::to_string(N + 1) + " fields");
        }
        RawRecord rec;
        rec.r = parse_double(fields[0], source, lineno);
        rec.profile.d.resize(N);
        for (Index q = 0; q < N; ++q) rec.profile.d(q) = parse_double(fields[static_cast<std::size_t>(q + 1)], source, lineno);
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw EmptyInputError(source + ": no data rows");
    return transform(records);
}

Dataset read_dataset_csv(const std::string &path) {
    auto in = open_in(path);
    return read_dataset_csv(in, path);
}

void write_truth_json(const std::string &path, const Truth &truth) {
    json j;
    j["K"] = std::vector<double>(truth.params.K.data(), truth.params.K.data() + truth.params.K.size());
    j["full_weights"] = [&] {
        Vec w = full_weights(truth.params.K);
        return std::vector<double>(w.data(), w.data() + w.size());
    }();
    j["rho"] = truth.params.rho;
    j["Lambda"] = matrix_to_json(truth.params.Lambda);
    j["seed"] = truth.seed;
    write_text(path, j.dump(2) + "\n");
}

Truth read_truth_json(const std::string &path) {
    json j = parse_json_file(path);
    Truth t;
    try {
        t.params.K = vector_from_json(j.at("K"), path);
        t.params.rho = j.at("rho").get<double>();
        t.params.Lambda = matrix_from_json(j.at("Lambda"), path);
        t.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception &e) {
        throw ParseError(path, 0, e.what());
    }
    return t;
}

HyperParams read_hyperparams_json(const std::string &path, Index N) {
    HyperParams hp = default_hyperparams(N);
    json j = parse_json_file(path);
    if (!j.is_object()) throw ParseError(path, 0, "expected a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string &key = it.key();
            if (key == "a0") {
                hp.a0 = it->get<double>();
            } else if (key == "b0") {
                hp.b0 = it->get<double>();
            } else if (key == "q0") {
                hp.q0 = it->get<double>();
            } else if (key == "n0") {
                hp.n0 = it->get<long>();
            } else if (key == "K0") {
                hp.K0 = vector_from_json(*it, path);
            } else if (key == "Lambda0") {
                hp.Lambda0 = matrix_from_json(*it, path);
            } else {
                throw ParseError(path, 0, "unknown hyperparameter '" + key + "'");
            }
        }
    } catch (const json::exception &e) {
        throw ParseError(path, 0, e.what());
    }
    if (hp.K0.size() != N - 1) throw ShapeError(path + ": K0 must have N - 1 entries");
    hp.validate();
    return hp;
}

void write_hyperparams_json(const std::string &path, const HyperParams &hp) {
    json j;
    j["a0"] = hp.a0;
    j["b0"] = hp.b0;
    j["q0"] = hp.q0;
    j["n0"] = hp.n0;
    j["K0"] = std::vector<double>(hp.K0.data(), hp.K0.data() + hp.K0.size());
    j["Lambda0"] = matrix_to_json(hp.Lambda0);
    write_text(path, j.dump(2) + "\n");
}

void write_profiles_csv(const std::string &path, const std::vector<LabeledProfile> &profiles) {
    if (profiles.empty()) throw EmptyInputError("write_profiles_csv: no profiles");
    const Index N = profiles.front().profile.d.size();
    auto out = open_out(path);
    out << "gene,stimulus,output";
    for (Index q = 1; q <= N; ++q) out << ",d_" << q;
    out << '\n';
    for (const auto &p : profiles) {
        out << p.gene << ',' << p.stimulus << ',' << p.output;
        for (Index q = 0; q < N; ++q) out << ',' << format_double(p.profile.d(q));
        out << '\n';
    }
    finish(out, path);
}

std::vector<ExpressionProfile> read_profiles_csv(const std::string &path) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
    auto header = split(line);
    if (header.size() < 5 || header[0] != "gene" || header[1] != "stimulus" || header[2] != "output") {
        throw ParseError(path, 1, "header must be gene,stimulus,output,d_1,...,d_N with N >= 2");
    }
    const std::size_t N = header.size() - 3;
    std::vector<ExpressionProfile> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        if (fields.size() != N + 3) throw ParseError(path, lineno, "expected " + std::to_string(N + 3) + " fields");
        ExpressionProfile p;
        p.d.resize(static_cast<Index>(N));
        for (std::size_t q = 0; q < N; ++q) p.d(static_cast<Index>(q)) = parse_double(fields[q + 3], path, lineno);
        out.push_back(std::move(p));
    }
    if (out.empty()) throw EmptyInputError(path + ": no profiles");
    return out;
}

void write_vb_trace_csv(const std::string &path, const VbTrace &trace) {
    auto out = open_out(path);
    out << "iteration,elbo,delta_K0K,delta_rho,delta_Lambda\n";
    for (const auto &r : trace) {
        out << r.iteration << ',' << format_double(r.elbo) << ',' << format_double(r.delta_K0K) << ','
            << format_double(r.delta_rho) << ',' << format_double(r.delta_Lambda) << '\n';
    }
    finish(out, path);
}

void write_em_trace_csv(const std::string &path, const std::vector<EmTraceRow> &trace) {
    auto out = open_out(path);
    const Index p = trace.empty() ? 0 : trace.front().K.size();
    out << "iteration,loglik";
    for (Index k = 1; k <= p; ++k) out << ",K_" << k;
    out << ",rho\n";
    for (const auto &r : trace) {
        out << r.iteration << ',' << format_double(r.loglik);
        for (Index k = 0; k < p; ++k) out << ',' << format_double(r.K(k));
        out << ',' << format_double(r.rho) << '\n';
    }
    finish(out, path);
}

void write_samples_csv(const std::string &path, const ParamSamples &s, const std::vector<long> &iteration) {
    if (!iteration.empty() && iteration.size() != s.size()) throw ShapeError("write_samples_csv: iteration count mismatch");
    auto out = open_out(path);
    const Index p = s.size() ? s.K.front().size() : 0;
    out << "iteration";
    for (Index k = 1; k <= p; ++k) out << ",K_" << k;
    out << ",rho";
    for (Index r = 1; r <= p; ++r) {
        for (Index c = r; c <= p; ++c) out << ",Lambda_" << r << c;
    }
    out << '\n';
    for (std::size_t t = 0; t < s.size(); ++t) {
        out << (iteration.empty() ? static_cast<long>(t + 1) : iteration[t]);
        for (Index k = 0; k < p; ++k) out << ',' << format_double(s.K[t](k));
        out << ',' << format_double(s.rho[t]);
        for (Index r = 0; r < p; ++r) {
            for (Index c = r; c < p; ++c) out << ',' << format_double(s.Lambda[t](r, c));
        }
        out << '\n';
    }
    finish(out, path);
}

ParamSamples read_samples_csv(const std::string &path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
    auto header = split(line);
    Index p = 0;
    while (static_cast<std::size_t>(p + 1) < header.size() && header[static_cast<std::size_t>(p + 1)] == "K_" + std::to_string(p + 1)) ++p;
    const std::size_t expected = 1 + static_cast<std::size_t>(p) + 1 + static_cast<std::size_t>(p * (p + 1) / 2);
    if (header.empty() || header[0] != "iteration" || p == 0 || header.size() != expected ||
        header[static_cast<std::size_t>(p + 1)] != "rho") {
        throw ParseError(path, 1, "header must be iteration,K_1..K_p,rho,Lambda_rc");
    }
    ParamSamples s;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split(line);
        if (f.size() != expected) throw ParseError(path, lineno, "expected " + std::to_string(expected) + " fields");
        Vec K(p);
        for (Index k = 0; k < p; ++k) K(k) = parse_double(f[static_cast<std::size_t>(k + 1)], path, lineno);
        double rho = parse_double(f[static_cast<std::size_t>(p + 1)], path, lineno);
        Mat L(p, p);
        std::size_t col = static_cast<std::size_t>(p + 2);
        for (Index r = 0; r < p; ++r) {
            for (Index c = r; c < p; ++c) L(r, c) = L(c, r) = parse_double(f[col++], path, lineno);
        }
        s.K.push_back(std::move(K));
        s.rho.push_back(rho);
        s.Lambda.push_back(std::move(L));
    }
    return s;
}

void write_density_csv(const std::string &path, const DensityGrid &grid) {
    auto out = open_out(path);
    out << "x,density\n";
    for (std::size_t i = 0; i < grid.x.size(); ++i) out << format_double(grid.x[i]) << ',' << format_double(grid.density[i]) << '\n';
    finish(out, path);
}

void write_text(const std::string &path, const std::string &text) {
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

} // namespace subpop
