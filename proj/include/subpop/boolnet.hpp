#pragma once
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "subpop/model.hpp"

namespace subpop {

enum class GateKind { And, Or, Not, Buf };

struct Gate {
    std::string name;
    GateKind kind;
    std::vector<std::string> fanin;
};

/** Combinational gate-level network.
 *
 * Netlist text format, one statement per line, `#` starts a comment:
 *
 *     input <name>
 *     gate <name> = AND|OR|NOT|BUF(<fanin>, ...)
 *     output <name>
 */
class BooleanNetwork {
    public:
        static BooleanNetwork parse(std::istream &in, const std::string &source = "<netlist>");
        static BooleanNetwork parse_file(const std::string &path);

        void add_input(const std::string &name);
        void add_gate(Gate gate);
        void add_output(const std::string &name);

        /// Resolves names, checks arity and acyclicity, and fixes the evaluation order.
        void finalize();

        const std::vector<std::string> &inputs() const { return inputs_; }
        const std::vector<std::string> &outputs() const { return outputs_; }
        const std::map<std::string, Gate> &gates() const { return gates_; }
        /// Gate names in topological order (valid after finalize()).
        const std::vector<std::string> &order() const { return order_; }
        bool has_node(const std::string &name) const;
        bool is_input(const std::string &name) const;

    private:
        std::vector<std::string> inputs_;
        std::vector<std::string> outputs_;
        std::map<std::string, Gate> gates_;
        std::vector<std::string> order_;
        bool finalized_ = false;
};

/// Stuck-at overrides: node -> stuck value.  File lines: `stuck <name> <0|1>`.
struct FaultMap {
    std::map<std::string, bool> overrides;

    static FaultMap parse(std::istream &in, const std::string &source = "<faults>");
    static FaultMap parse_file(const std::string &path);
};

/// Input assignment plus inhibited nodes.  File lines: `set <name> <0|1>`, `drug <name>`.
struct Stimulus {
    std::string name;
    std::map<std::string, bool> assignment;
    std::set<std::string> drug_targets;

    static Stimulus parse(std::istream &in, const std::string &source = "<stimulus>");
    static Stimulus parse_file(const std::string &path);
};

/// Output -> gene id.  File lines: `<output> <gene>`.
using GeneMap = std::vector<std::pair<std::string, std::string>>;
GeneMap parse_gene_map(std::istream &in, const std::string &source = "<gene map>");
GeneMap parse_gene_map_file(const std::string &path);

/** Value of every output under one faulty network and one stimulus.
 *
 * Precedence per node: stuck-at fault, then drug forcing to 0, then gate logic.
 */
std::map<std::string, bool> evaluate(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim);

/// Value of every node (inputs and gates), same semantics as evaluate().
std::map<std::string, bool> evaluate_all(const BooleanNetwork &net, const FaultMap &fault, const Stimulus &stim);

struct LabeledProfile {
    std::string gene;
    std::string stimulus;
    std::string output;
    ExpressionProfile profile;
};

/** One profile per (stimulus, mapped output) pair; entry q is the output's value in
 * network q (the network carrying faults[q]).
 */
std::vector<LabeledProfile> profiles_for_ensemble(const BooleanNetwork &net, const std::vector<FaultMap> &faults,
                                                  const std::vector<Stimulus> &stimuli, const GeneMap &gene_map);

} // namespace subpop
