#include "subpop/boolnet.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "subpop/errors.hpp"

namespace subpop {

namespace {

std::string trim(const std::string &s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string &line) {
    auto h = line.find('#');
    return trim(h == std::string::npos ? line : line.substr(0, h));
}

std::vector<std::string> words(const std::string &s) {
    std::istringstream ss(s);
    std::vector<std::string> out;
    for (std::string w; ss >> w;) out.push_back(w);
    return out;
}

bool valid_name(const std::string &s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '/';
    });
}

bool parse_bit(const std::string &s, bool &out) {
    if (s == "0") {
        out = false;
        return true;
    }
    if (s == "1") {
        out = true;
        return true;
    }
    return false;
}

std::ifstream open_or_throw(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

std::string stem(const std::string &path) {
    auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

} // namespace

BooleanNetwork BooleanNetwork::parse(std::istream &in, const std::string &source) {
    BooleanNetwork net;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_comment(raw);
        if (line.empty()) continue;
        auto w = words(line);
        try {
            if (w[0] == "input" || w[0] == "output") {
                if (w.size() != 2 || !valid_name(w[1])) throw ParseError(source, lineno, "expected `" + w[0] + " <name>`");
                if (w[0] == "input") {
                    net.add_input(w[1]);
                } else {
                    net.add_output(w[1]);
                }
            } else if (w[0] == "gate") {
                auto eq = line.find('=');
                auto open = line.find('(', eq == std::string::npos ? 0 : eq);
                auto close = line.rfind(')');
                if (eq == std::string::npos || open == std::string::npos || close == std::string::npos || close < open ||
                    !trim(line.substr(close + 1)).empty()) {
                    throw ParseError(source, lineno, "expected `gate <name> = KIND(<fanins>)`");
                }
                std::string name = trim(line.substr(4, eq - 4));
                std::string kind = trim(line.substr(eq + 1, open - eq - 1));
                if (!valid_name(name)) throw ParseError(source, lineno, "bad gate name");
                Gate g{name, GateKind::And, {}};
                if (kind == "AND") {
                    g.kind = GateKind::And;
                } else if (kind == "OR") {
                    g.kind = GateKind::Or;
                } else if (kind == "NOT") {
                    g.kind = GateKind::Not;
                } else if (kind == "BUF") {
                    g.kind = GateKind::Buf;
                } else {
                    throw ParseError(source, lineno, "unknown gate kind `" + kind + "`");
                }
                std::stringstream args(line.substr(open + 1, close - open - 1));
                for (std::string a; std::getline(args, a, ',');) {
                    a = trim(a);
                    if (!valid_name(a)) throw ParseError(source, lineno, "bad fan-in name `" + a + "`");
                    g.fanin.push_back(a);
                }
                net.add_gate(std::move(g));
            } else {
                throw ParseError(source, lineno, "unknown statement `" + w[0] + "`");
            }
        } catch (const GraphError &e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    net.finalize();
    return net;
}

BooleanNetwork BooleanNetwork::parse_file(const std::string &path) {
    auto in = open_or_throw(path);
    return parse(in, path);
}

void BooleanNetwork::add_input(const std::string &name) {
    if (has_node(name)) throw GraphError("duplicate node `" + name + "`");
    inputs_.push_back(name);
    finalized_ = false;
}

void BooleanNetwork::add_gate(Gate gate) {
    if (has_node(gate.name)) throw GraphError("duplicate node `" + gate.name + "`");
    const std::size_t arity = gate.fanin.size();
    if ((gate.kind == GateKind::Not || gate.kind == GateKind::Buf) && arity != 1) {
        throw GraphError("gate `" + gate.name + "`: NOT/BUF take exactly one fan-in");
    }
    if (arity == 0) throw GraphError("gate `" + gate.name + "` has no fan-in");
    std::string name = gate.name;
    gates_.emplace(std::move(name), std::move(gate));
    finalized_ = false;
}

void BooleanNetwork::add_output(const std::string &name) {
    if (std::find(outputs_.begin(), outputs_.end(), name) != outputs_.end()) {
        throw GraphError("duplicate output `" + name + "`");
    }
    outputs_.push_back(name);
    finalized_ = false;
}

bool BooleanNetwork::has_node(const std::string &name) const { return is_input(name) || gates_.count(name) > 0; }

bool BooleanNetwork::is_input(const std::string &name) const {
    return std::find(inputs_.begin(), inputs_.end(), name) != inputs_.end();
}

void BooleanNetwork::finalize() {
    for (const auto &[name, g] : gates_) {
        for (const auto &f : g.fanin) {
            if (!has_node(f)) throw GraphError("gate `" + name + "` references unknown node `" + f + "`");
        }
    }
    for (const auto &o : outputs_) {
        if (!has_node(o)) throw GraphError("output `" + o + "` is not a node");
    }
    // Depth-first topological sort with cycle detection.
    enum class Mark { None, Active, Done };
    std::map<std::string, Mark> mark;
    order_.clear();
    for (const auto &entry : gates_) {
        if (mark[entry.first] == Mark::Done) continue;
        std::vector<std::pair<std::string, std::size_t>> stack{{entry.first, 0}};
        mark[entry.first] = Mark::Active;
        while (!stack.empty()) {
            auto &[node, next] = stack.back();
            const Gate &g = gates_.at(node);
            if (next < g.fanin.size()) {
                const std::string &f = g.fanin[next++];
                if (is_input(f)) continue;
                Mark m = mark[f];
                if (m == Mark::Active) throw GraphError("cycle through node `" + f + "`");
                if (m == Mark::None) {
                    mark[f] = Mark::Active;
                    stack.emplace_back(f, 0);
                }
            } else {
                mark[node] = Mark::Done;
                order_.push_back(node);
                stack.pop_back();
            }
        }
    }
    finalized_ = true;
}

FaultMap FaultMap::parse(std::istream &in, const std::string &source) {
    FaultMap fm;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_comment(raw);
        if (line.empty()) continue;
        auto w = words(line);
        bool v = false;
        if (w.size() != 3 || w[0] != "stuck" || !valid_name(w[1]) || !parse_bit(w[2], v)) {
            throw ParseError(source, lineno, "expected `stuck <name> <0|1>`");
        }
        if (!fm.overrides.emplace(w[1], v).second) throw ParseError(source, lineno, "duplicate fault on `" + w[1] + "`");
    }
    return fm;
}

FaultMap FaultMap::parse_file(const std::string &path) {
    auto in = open_or_throw(path);
    return parse(in, path);
}

Stimulus Stimulus::parse(std::istream &in, const std::string &source) {
    Stimulus st;
    st.name = stem(source);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_comment(raw);
        if (line.empty()) continue;
        auto w = words(line);
        bool v = false;
        if (w.size() == 3 && w[0] == "set" && valid_name(w[1]) && parse_bit(w[2], v)) {
            if (!st.assignment.emplace(w[1], v).second) throw ParseError(source, lineno, "duplicate assignment to `" + w[1] + "`");
        } else if (w.size() == 2 && w[0] == "drug" && valid_name(w[1])) {
            st.drug_targets.insert(w[1]);
        } else {
            throw ParseError(source, lineno, "expected `set <name> <0|1>` or `drug <name>`");
        }
    }
    return st;
}

Stimulus Stimulus::parse_file(const std::string &path) {
    auto in = open_or_throw(path);
    return parse(in, path);
}

GeneMap parse_gene_map(std::istream &in, const std::string &source) {
    GeneMap gm;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_comment(raw);
        if (line.empty()) continue;
        auto w = words(line);
        if (w.size() != 2 || !valid_name(w[0])) throw ParseError(source, lineno, "expected `<output> <gene>`");
        gm.emplace_back(w[0], w[1]);
    }
    return gm;
}

GeneMap parse_gene_map_file(const std::string &path) {
    auto in = open_or_throw(path);
    return parse_gene_map(in, path);
}

namespace {

void check_references(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim) {
    for (const auto &[n, v] : fault.overrides) {
        if (!net.has_node(n)) throw GraphError("fault references unknown node `" + n + "`");
    }
    for (const auto &[n, v] : stim.assignment) {
        if (!net.is_input(n)) throw GraphError("stimulus assigns non-input `" + n + "`");
    }
    for (const auto &n : stim.drug_targets) {
        if (!net.has_node(n)) throw GraphError("drug targets unknown node `" + n + "`");
    }
    for (const auto &in : net.inputs()) {
        if (!stim.assignment.count(in)) throw GraphError("stimulus `" + stim.name + "` leaves input `" + in + "` unassigned");
    }
}

} // namespace

std::map<std::string, bool> evaluate_all(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim) {
    if (net.order().size() != net.gates().size()) throw GraphError("network is not finalized");
    check_references(net, fault, stim);
    auto settle = [&](const std::string &node, bool computed) {
        if (auto it = fault.overrides.find(node); it != fault.overrides.end()) return it->second;
        if (stim.drug_targets.count(node)) return false;
        return computed;
    };
    std::map<std::string, bool> value;
    for (const auto &in : net.inputs()) value[in] = settle(in, stim.assignment.at(in));
    for (const auto &name : net.order()) {
        const Gate &g = net.gates().at(name);
        bool v = false;
        switch (g.kind) {
        case GateKind::And:
            v = std::all_of(g.fanin.begin(), g.fanin.end(), [&](const std::string &f) { return value.at(f); });
            break;
        case GateKind::Or:
            v = std::any_of(g.fanin.begin(), g.fanin.end(), [&](const std::string &f) { return value.at(f); });
            break;
        case GateKind::Not:
            v = !value.at(g.fanin[0]);
            break;
        case GateKind::Buf:
            v = value.at(g.fanin[0]);
            break;
        }
        value[name] = settle(name, v);
    }
    return value;
}

std::map<std::string, bool> evaluate(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim) {
    auto all = evaluate_all(net, fault, stim);
    std::map<std::string, bool> out;
    for (const auto &o : net.outputs()) out[o] = all.at(o);
    return out;
}

std::vector<LabeledProfile> profiles_for_ensemble(const BooleanNetwork &net, const std::vector<FaultMap> &faults,
                                                  const std::vector<Stimulus> &stimuli, const GeneMap &gene_map) {
    if (faults.empty()) throw ParameterError("profiles_for_ensemble: need at least one fault map");
    if (stimuli.empty()) throw ParameterError("profiles_for_ensemble: need at least one stimulus");
    if (gene_map.empty()) throw ParameterError("profiles_for_ensemble: empty gene map");
    for (const auto &[out, gene] : gene_map) {
        if (std::find(net.outputs().begin(), net.outputs().end(), out) == net.outputs().end()) {
            throw GraphError("gene map references `" + out + "`, which is not an output");
        }
    }
    const Index N = static_cast<Index>(faults.size());
    std::vector<LabeledProfile> result;
    for (const auto &stim : stimuli) {
        std::vector<std::map<std::string, bool>> per_net;
        per_net.reserve(faults.size());
        for (const auto &f : faults) per_net.push_back(evaluate(net, f, stim));
        for (const auto &[out, gene] : gene_map) {
            Vec d(N);
            for (Index q = 0; q < N; ++q) d(q) = per_net[static_cast<std::size_t>(q)].at(out) ? 1.0 : 0.0;
            result.push_back({gene, stim.name, out, {std::move(d)}});
        }
    }
    return result;
}

} // namespace subpop
