#include <doctest.h>

#include "krein/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace krein;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "schema": 1,
  "name": "small-cross",
  "domain": {"type": "rectangle", "half_width": 1, "half_height": 1, "n": 8},
  "measure": {"type": "cross"},
  "eigen_count": 4,
  "checks": ["spectrum", "nodal", "courant", "rayleigh"],
  "expect": {"lambda": [2.0]},
  "tolerances": {"lambda_rel": 0.02},
  "seed": 7
})";

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string config_error(const std::string& text)
{
    try {
        parse_experiment_config(text, "t.json");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("krein-test-" + name);
    fs::remove_all(p);
    return p;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(KREIN_LAB_EXE) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

} // namespace

TEST_CASE("config parse errors")
{
    CHECK(config_error("{\n  \"schema\": 1,\n  \"name\" \"x\"\n}").find("t.json:3:") != std::string::npos);
    CHECK(config_error(R"({"schema": 2, "checks": []})").find("schema") != std::string::npos);
    CHECK(config_error(R"({"checks": ["spectra"]})").find("checks[0]") != std::string::npos);
    CHECK(config_error(R"({"bogus": 1})").find("bogus") != std::string::npos);
    CHECK(config_error(R"({"domain": {"type": "rectangle", "n": 4}, "measure": {"type": "cross"},
                           "eigen_count": "six", "checks": ["spectrum"]})")
              .find("eigen_count") != std::string::npos);
    CHECK(config_error(R"({"domain": {"type": "rectangle", "n": 4}, "checks": ["spectrum"]})").find("measure") !=
          std::string::npos);
    CHECK(config_error(R"({"measure": {"type": "cross"}, "checks": ["spectrum"]})").find("domain") !=
          std::string::npos);
    CHECK(config_error(R"({"domain": {"type": "rectangle", "n": 4},
                           "measure": {"type": "lines", "segments": [{"p": [0, 0], "q": [0, 0]}]},
                           "checks": ["spectrum"]})") != "");
}

TEST_CASE("empty check list runs nothing")
{
    const auto cfg = parse_experiment_config(R"({"schema": 1, "name": "idle", "checks": []})");
    const auto rep = run_experiment(cfg);
    CHECK(rep.checks.empty());
    CHECK(rep.all_pass());
    for (const auto& name : {"spectrum", "nodal", "courant", "green", "dim", "conformal-roundtrip"})
        CHECK(std::find(known_checks().begin(), known_checks().end(), name) != known_checks().end());
}

TEST_CASE("small experiment and report files")
{
    const auto cfg = parse_experiment_config(kSmall);
    const auto rep = run_experiment(cfg);
    CHECK(rep.all_pass());
    REQUIRE(rep.spectrum.size() == 4u);
    CHECK(rep.spectrum[0].lambda == doctest::Approx(2.0).epsilon(0.02));
    CHECK(rep.spectrum[0].nodal_count == 1);
    CHECK(rep.eigenfunctions.size() == 4u);
    CHECK(std::any_of(rep.notes.begin(), rep.notes.end(),
                      [](const std::string& n) { return n.find("Poincare constant 1/lambda_1 = 0.49") != std::string::npos; }));

    const fs::path a = scratch("a"), b = scratch("b");
    emit_report(rep, a);
    emit_report(run_experiment(cfg), b);
    for (const char* f : {"spectrum.csv", "nodal.csv", "green.csv", "summary.txt", "eigenfunction_1.csv"})
        CHECK(fs::exists(a / f));
    CHECK(slurp(a / "spectrum.csv").rfind("index,lambda,nodal_count,courant_bound,residual\n", 0) == 0);
    CHECK(slurp(a / "nodal.csv").rfind("index,lambda,multiplicity_cluster,nodal_count,bound,pass\n", 0) == 0);
    CHECK(slurp(a / "green.csv").rfind("check,domain,measure,value,tolerance,pass\n", 0) == 0);
    CHECK(slurp(a / "summary.txt").rfind("KREIN-LAB REPORT v1\n", 0) == 0);
    // Same config and seed give byte-identical tables.
    CHECK(slurp(a / "spectrum.csv") == slurp(b / "spectrum.csv"));
    CHECK(slurp(a / "nodal.csv") == slurp(b / "nodal.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("failing expectation is reported, not thrown")
{
    std::string text = kSmall;
    text.replace(text.find("[2.0]"), 5, "[3.0]");
    const auto rep = run_experiment(parse_experiment_config(text));
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("exit codes")
{
    CHECK(exit_code_for(ErrorKind::Config) == 2);
    CHECK(exit_code_for(ErrorKind::Numerical) == 3);

    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "bad.json") << "{ \"schema\": 1, ";
        std::ofstream(dir / "ok.json") << kSmall;
        std::string fail = kSmall;
        fail.replace(fail.find("[2.0]"), 5, "[3.0]");
        std::ofstream(dir / "fail.json") << fail;
    }
    CHECK(run_cli("run " + (dir / "bad.json").string() + " --out " + (dir / "o1").string()) == 2);
    CHECK(run_cli("run " + (dir / "ok.json").string() + " --out " + (dir / "o2").string()) == 0);
    CHECK(fs::exists(dir / "o2" / "summary.txt"));
    CHECK(run_cli("run " + (dir / "fail.json").string() + " --out " + (dir / "o3").string()) == 1);
    CHECK(run_cli("run " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("mesh --type disk --level 3") == 0);
    CHECK(run_cli("mesh --type hexagon") == 2);
    const std::string cfgdir = KREIN_CONFIG_DIR;
    CHECK(run_cli("run " + cfgdir + "/dim-cross.json --out " + (dir / "o4").string()) == 0);
    fs::remove_all(dir);
}
