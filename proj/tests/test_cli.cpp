#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"
#include "subpop/cli.hpp"
#include "subpop/io.hpp"

using namespace subpop;
namespace fs = std::filesystem;

namespace {

fs::path workdir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "subpop_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string &name) { return (workdir() / name).string(); }

std::string slurp(const std::string &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t lines(const std::string &p) {
    std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

int run(const std::vector<std::string> &args) { return run_cli(args); }

/// Runs the built executable; returns its exit status.
int run_binary(const std::string &args) {
    const char *exe = std::getenv("SUBPOP_CLI");
    REQUIRE_MESSAGE(exe != nullptr, "SUBPOP_CLI is not set");
    std::string cmd = std::string(exe) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const std::string &name, const std::string &text) { write_text(path(name), text); }

} // namespace

TEST_CASE("synth writes a dataset and truth sidecar, reproducibly") {
    CHECK(run({"synth", "--genes", "300", "--seed", "4", "--out", path("a.csv")}) == kExitOk);
    CHECK(run({"synth", "--genes", "300", "--seed", "4", "--out", path("b.csv")}) == kExitOk);
    CHECK(slurp(path("a.csv")) == slurp(path("b.csv")));
    CHECK(slurp(path("a.truth.json")) == slurp(path("b.truth.json")));
    CHECK(lines(path("a.csv")) == 301);
    Truth t = read_truth_json(path("a.truth.json"));
    CHECK(t.seed == 4);
    CHECK(t.params.K(0) == 0.1);
    CHECK(t.params.rho == 100);
}

TEST_CASE("synth usage errors") {
    CHECK(run({"synth", "--genes", "0", "--out", path("z.csv")}) == kExitUsage);
    CHECK(run({"synth", "--genes", "10", "--true-k", "0.1", "--out", path("z.csv")}) == kExitUsage);
    CHECK(run({"synth", "--genes", "10", "--profiles", "nonsense", "--out", path("z.csv")}) != kExitOk);
    CHECK(run({"nosuch"}) == kExitUsage);
    CHECK(run({}) == kExitUsage);
}

TEST_CASE("fit em and vb produce reports") {
    REQUIRE(run({"synth", "--genes", "400", "--seed", "5", "--out", path("d.csv")}) == kExitOk);
    CHECK(run({"fit", "--data", path("d.csv"), "--method", "em", "--out", path("em")}) == kExitOk);
    auto em = nlohmann::json::parse(slurp(path("em/report.json")));
    CHECK(em["method"] == "em");
    CHECK(em["estimates"]["full_weights"].size() == 3);
    CHECK(fs::exists(path("em/trace.csv")));
    CHECK(fs::exists(path("em/timing.json")));

    CHECK(run({"fit", "--data", path("d.csv"), "--method", "vb", "--samples", "500", "--max-iter", "50", "--out",
               path("vb")}) == kExitOk);
    auto vb = nlohmann::json::parse(slurp(path("vb/report.json")));
    CHECK(vb["estimator"] == "posterior mode");
    CHECK(lines(path("vb/samples.csv")) == 501);
    CHECK(lines(path("vb/trace.csv")) == 51);
}

TEST_CASE("gibbs with 10 iterations writes 10 chain rows") {
    REQUIRE(run({"synth", "--genes", "50", "--seed", "6", "--out", path("g.csv")}) == kExitOk);
    CHECK(run({"fit", "--data", path("g.csv"), "--method", "gibbs", "--iterations", "10", "--burn-in", "0", "--out",
               path("gibbs")}) == kExitOk);
    CHECK(lines(path("gibbs/samples.csv")) == 11);
    CHECK(lines(path("gibbs/trace.csv")) == 11);
}

TEST_CASE("rerunning the echoed config reproduces every output byte for byte") {
    REQUIRE(run({"synth", "--genes", "200", "--seed", "7", "--out", path("r.csv")}) == kExitOk);
    REQUIRE(run({"fit", "--data", path("r.csv"), "--method", "gibbs", "--iterations", "300", "--seed", "3", "--workers",
                 "3", "--out", path("r1")}) == kExitOk);
    auto rep = nlohmann::json::parse(slurp(path("r1/report.json")));
    write("r1_config.json", rep["config"].dump());
    REQUIRE(run({"fit", "--config", path("r1_config.json"), "--workers", "1", "--out", path("r2")}) == kExitOk);
    for (const char *f : {"report.json", "trace.csv", "samples.csv"}) {
        std::string a = slurp(path(std::string("r1/") + f)), b = slurp(path(std::string("r2/") + f));
        // The echoed config records the output directory and worker count.
        if (std::string(f) == "report.json") {
            auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
            ja.erase("config");
            jb.erase("config");
            CHECK(ja == jb);
        } else {
            CHECK(a == b);
        }
    }
}

TEST_CASE("fit error exit codes") {
    CHECK(run({"fit", "--data", path("missing.csv"), "--method", "vb"}) == kExitIo);
    write("bad.csv", "r,d_1,d_2\n0.1,1,oops\n");
    CHECK(run({"fit", "--data", path("bad.csv"), "--method", "em"}) == kExitIo);
    REQUIRE(run({"synth", "--genes", "20", "--seed", "8", "--out", path("e.csv")}) == kExitOk);
    CHECK(run({"fit", "--data", path("e.csv"), "--method", "magic"}) == kExitUsage);
    // A flat dataset with every residual zero has sum S_i = 0.
    write("flat.csv", "r,d_1,d_2\n1,1,1\n0,0,0\n");
    write("flat_init.json", R"({"K": [0.2], "Lambda": [[4.0]], "rho": 3.0, "seed": 0})");
    CHECK(run({"fit", "--data", path("flat.csv"), "--method", "em", "--init", path("flat_init.json"), "--out",
               path("flat")}) == kExitNumeric);
}

TEST_CASE("profiles from a toy netlist bundle") {
    write("toy.net", "input a\ninput b\ngate m = AND(a, b)\ngate y = OR(m, c)\ngate c = NOT(a)\noutput y\n");
    write("f1.flt", "stuck m 1\n");
    write("f2.flt", "# healthy\n");
    write("f3.flt", "stuck y 0\n");
    write("s1.stim", "set a 1\nset b 0\n");
    write("s2.stim", "set a 0\nset b 1\n");
    write("genes.map", "y SP1\n");
    const std::string faults = path("f1.flt") + "," + path("f2.flt") + "," + path("f3.flt");
    const std::string stims = path("s1.stim") + "," + path("s2.stim");
    CHECK(run({"profiles", "--netlist", path("toy.net"), "--faults", faults, "--stimuli", stims, "--gene-map",
               path("genes.map"), "--out", path("prof.csv")}) == kExitOk);
    auto prof = read_profiles_csv(path("prof.csv"));
    REQUIRE(prof.size() == 2);
    // s1: a=1, b=0 -> (1, 0, 0); s2: a=0 -> c=1 -> (1, 1, 0).
    CHECK(prof[0].d == Eigen::Vector3d(1, 0, 0));
    CHECK(prof[1].d == Eigen::Vector3d(1, 1, 0));

    CHECK(run({"profiles", "--netlist", path("toy.net"), "--faults", "", "--stimuli", stims, "--gene-map",
               path("genes.map"), "--out", path("prof2.csv")}) == kExitUsage);
    write("broken.net", "input a\ngate y = XOR(a)\n");
    CHECK(run({"profiles", "--netlist", path("broken.net"), "--faults", faults, "--stimuli", stims, "--gene-map",
               path("genes.map"), "--out", path("prof3.csv")}) != kExitOk);

    // Profiles feed synth.
    CHECK(run({"synth", "--genes", "10", "--profiles", path("prof.csv"), "--out", path("fromprof.csv")}) == kExitOk);
    CHECK(lines(path("fromprof.csv")) == 11);
}

TEST_CASE("density writes grids and modes") {
    REQUIRE(run({"synth", "--genes", "300", "--seed", "9", "--out", path("dd.csv")}) == kExitOk);
    REQUIRE(run({"fit", "--data", path("dd.csv"), "--method", "vb", "--samples", "400", "--out", path("dvb")}) == kExitOk);
    CHECK(run({"density", "--samples", path("dvb/samples.csv"), "--out", path("dens")}) == kExitOk);
    CHECK(fs::exists(path("dens/modes.json")));
    CHECK(fs::exists(path("dens/density_K3.csv")));
    CHECK(fs::exists(path("dens/density_rho.csv")));
    auto modes = nlohmann::json::parse(slurp(path("dens/modes.json")));
    CHECK(modes.contains("full_weights_mode"));
}

TEST_CASE("bench writes a timing table") {
    CHECK(run({"bench", "--sizes", "200,400", "--method", "em", "--iterations", "3", "--reps", "1", "--workers", "2",
               "--out", path("bench.csv")}) == kExitOk);
    std::string csv = slurp(path("bench.csv"));
    CHECK(csv.rfind("size,mode,workers,seconds,per_iter_seconds,speedup\n", 0) == 0);
    CHECK(lines(path("bench.csv")) == 1 + 2 * 2);
}

TEST_CASE("the installed executable uses the same exit codes") {
    CHECK(run_binary("synth --genes 0 --out " + path("x.csv")) == kExitUsage);
    CHECK(run_binary("fit --data " + path("missing.csv")) == kExitIo);
    CHECK(run_binary("synth --genes 5 --out " + path("ok.csv")) == kExitOk);
}
