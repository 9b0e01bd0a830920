#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "subpop/boolnet.hpp"
#include "subpop/oracles.hpp"

using namespace subpop;

namespace {

BooleanNetwork net_from(const std::string &text) {
    std::istringstream in(text);
    return BooleanNetwork::parse(in);
}

Stimulus stim(std::map<std::string, bool> a, std::set<std::string> drugs = {}) {
    Stimulus s;
    s.assignment = std::move(a);
    s.drug_targets = std::move(drugs);
    return s;
}

/// Random acyclic network: gate k only reads inputs and earlier gates.
BooleanNetwork random_net(RngStream &rng, int inputs, int gates, int outputs) {
    BooleanNetwork net;
    std::vector<std::string> pool;
    for (int i = 0; i < inputs; ++i) {
        pool.push_back("x" + std::to_string(i));
        net.add_input(pool.back());
    }
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n) * 0.999999); };
    for (int g = 0; g < gates; ++g) {
        Gate gate;
        gate.name = "g" + std::to_string(g);
        gate.kind = static_cast<GateKind>(pick(4));
        std::size_t arity = (gate.kind == GateKind::Not || gate.kind == GateKind::Buf) ? 1 : 2 + pick(2);
        for (std::size_t a = 0; a < arity; ++a) gate.fanin.push_back(pool[pick(pool.size())]);
        net.add_gate(gate);
        pool.push_back(gate.name);
    }
    for (int o = 0; o < outputs; ++o) net.add_output("g" + std::to_string(gates - 1 - o));
    net.finalize();
    return net;
}

const char *kToy = R"(# toy chain
input a
input b
gate m = AND(a, b)
gate n = BUF(m)
gate y = OR(n, c)
gate c = NOT(a)
output y
)";

} // namespace

TEST_CASE("stuck-at-1 overrides gate logic") {
    auto net = net_from("input a\ninput b\ngate y = AND(a,b)\noutput y\n");
    FaultMap f;
    f.overrides["y"] = true;
    CHECK(evaluate(net, f, stim({{"a", false}, {"b", false}})).at("y") == true);
    CHECK(evaluate(net, {}, stim({{"a", false}, {"b", false}})).at("y") == false);
}

TEST_CASE("NOT gate") {
    auto net = net_from("input a\ngate y = NOT(a)\noutput y\n");
    CHECK(evaluate(net, {}, stim({{"a", true}})).at("y") == false);
    CHECK(evaluate(net, {}, stim({{"a", false}})).at("y") == true);
}

TEST_CASE("toy ensemble where only the first network's fault reaches the output") {
    auto net = net_from(kToy);
    FaultMap f1, f2, f3;
    f1.overrides["n"] = true;  // drives y high
    f2.overrides["m"] = false; // y already low for this stimulus
    f3.overrides["b"] = false;
    Stimulus s = stim({{"a", true}, {"b", false}});
    s.name = "s0";
    auto p = profiles_for_ensemble(net, {f1, f2, f3}, {s}, {{"y", "SP1"}});
    REQUIRE(p.size() == 1);
    CHECK(p[0].gene == "SP1");
    CHECK(p[0].profile.d(0) == 1);
    CHECK(p[0].profile.d(1) == 0);
    CHECK(p[0].profile.d(2) == 0);
}

TEST_CASE("drug forcing and precedence") {
    auto net = net_from("input a\ngate k = BUF(a)\ngate y = BUF(k)\noutput y\n");
    CHECK(evaluate(net, {}, stim({{"a", true}}, {"k"})).at("y") == false);
    FaultMap up;
    up.overrides["k"] = true;
    CHECK(evaluate(net, up, stim({{"a", false}}, {"k"})).at("y") == true);
    // Drug on an input forces it low.
    CHECK(evaluate(net, {}, stim({{"a", true}}, {"a"})).at("y") == false);
}

TEST_CASE("ensemble profile shapes") {
    auto net = net_from(kToy);
    Stimulus s = stim({{"a", true}, {"b", true}});
    auto single = profiles_for_ensemble(net, {FaultMap{}}, {s}, {{"y", "G"}});
    REQUIRE(single.size() == 1);
    CHECK(single[0].profile.d.size() == 1);

    FaultMap f;
    f.overrides["c"] = false;
    auto same = profiles_for_ensemble(net, {f, f, f, f}, {s, stim({{"a", false}, {"b", true}})}, {{"y", "G"}});
    for (auto &p : same) CHECK(p.profile.d.minCoeff() == p.profile.d.maxCoeff());

    CHECK_THROWS_AS(profiles_for_ensemble(net, {}, {s}, {{"y", "G"}}), ParameterError);
    CHECK_THROWS_AS(profiles_for_ensemble(net, {f}, {s}, {{"m", "G"}}), GraphError);
}

TEST_CASE("ensemble profiles against the truth-table oracle") {
    auto net = net_from(kToy);
    std::vector<FaultMap> faults(3);
    faults[0].overrides["m"] = true;
    faults[1].overrides["c"] = true;
    faults[2].overrides["y"] = false;
    std::vector<Stimulus> stims{stim({{"a", false}, {"b", true}}), stim({{"a", true}, {"b", true}})};
    auto prof = profiles_for_ensemble(net, faults, stims, {{"y", "G"}});
    REQUIRE(prof.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        // Inputs ordered (a, b): row index = a + 2 b.
        std::size_t row = static_cast<std::size_t>(stims[s].assignment["a"]) + 2 * stims[s].assignment["b"];
        for (std::size_t q = 0; q < 3; ++q) {
            bool expect = oracle_truth_table(net, faults[q])[row][0];
            CHECK(prof[s].profile.d(static_cast<Index>(q)) == static_cast<double>(expect));
        }
    }
}

TEST_CASE("evaluate agrees with the truth-table oracle on random netlists") {
    RngStream rng(2024, 0);
    for (int t = 0; t < 100; ++t) {
        int n_in = 1 + static_cast<int>(rng.uniform() * 9.99);
        auto net = random_net(rng, n_in, 3 + static_cast<int>(rng.uniform() * 20), 2);
        FaultMap fault;
        std::set<std::string> drugs;
        if (t % 3 != 0) {
            fault.overrides["g" + std::to_string(static_cast<int>(rng.uniform() * 2.99))] = rng.uniform() < 0.5;
            drugs.insert("x0");
        }
        auto table = oracle_truth_table(net, fault, drugs);
        for (std::size_t k = 0; k < table.size(); ++k) {
            Stimulus s;
            s.drug_targets = drugs;
            for (std::size_t j = 0; j < net.inputs().size(); ++j) s.assignment[net.inputs()[j]] = (k >> j) & 1u;
            auto out = evaluate(net, fault, s);
            for (std::size_t o = 0; o < net.outputs().size(); ++o) CHECK(out.at(net.outputs()[o]) == table[k][o]);
        }
    }
}

TEST_CASE("a stuck node is invariant to every input assignment") {
    RngStream rng(7, 0);
    for (int t = 0; t < 20; ++t) {
        auto net = random_net(rng, 5, 12, 1);
        for (bool v : {false, true}) {
            FaultMap f;
            f.overrides["g5"] = v;
            for (std::size_t k = 0; k < 32; ++k) {
                Stimulus s;
                for (std::size_t j = 0; j < 5; ++j) s.assignment[net.inputs()[j]] = (k >> j) & 1u;
                CHECK(evaluate_all(net, f, s).at("g5") == v);
            }
        }
    }
}

TEST_CASE("parse errors carry line numbers") {
    try {
        net_from("input a\n\ngate y = XOR(a)\noutput y\n");
        FAIL("expected a parse error");
    } catch (const ParseError &e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(net_from("input a\nwire y\n"), ParseError);
    CHECK_THROWS_AS(net_from("input a\ngate y = NOT(a, a)\noutput y\n"), ParseError);
    std::istringstream f("stuck y 2\n");
    CHECK_THROWS_AS(FaultMap::parse(f), ParseError);
    std::istringstream s("set a 1\nboost a\n");
    CHECK_THROWS_AS(Stimulus::parse(s), ParseError);
}

TEST_CASE("graph errors") {
    CHECK_THROWS_AS(net_from("input a\ngate x = AND(a, y)\ngate y = BUF(x)\noutput y\n"), GraphError);
    CHECK_THROWS_AS(net_from("input a\ngate y = BUF(q)\noutput y\n"), GraphError);
    CHECK_THROWS_AS(net_from("input a\noutput z\n"), GraphError);
    auto net = net_from("input a\ninput b\ngate y = OR(a, b)\noutput y\n");
    CHECK_THROWS_AS(evaluate(net, {}, stim({{"a", true}})), GraphError);
    FaultMap bad;
    bad.overrides["nope"] = true;
    CHECK_THROWS_AS(evaluate(net, bad, stim({{"a", true}, {"b", true}})), GraphError);
}

TEST_CASE("fault, stimulus and gene map files parse") {
    std::istringstream f("# faults\nstuck m 1\nstuck c 0 # trailing\n");
    auto fm = FaultMap::parse(f);
    CHECK(fm.overrides.size() == 2);
    CHECK(fm.overrides.at("m") == true);
    std::istringstream s("set a 1\nset b 0\ndrug m\n");
    auto st = Stimulus::parse(s);
    CHECK(st.assignment.at("a"));
    CHECK_FALSE(st.assignment.at("b"));
    CHECK(st.drug_targets.count("m") == 1);
    std::istringstream g("y SP1\n");
    auto gm = parse_gene_map(g);
    REQUIRE(gm.size() == 1);
    CHECK(gm[0].second == "SP1");
}
