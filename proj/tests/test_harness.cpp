#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#ifndef THETAINCL_CLI_PATH
#error "THETAINCL_CLI_PATH must point at the solver binary"
#endif

namespace {

struct CliResult {
    int code = -1;
    std::string output; // stdout + stderr interleaved
};

std::string fresh_dir() {
    char tmpl[] = "/tmp/thetaincl_harness_XXXXXX";
    const char* dir = mkdtemp(tmpl);
    REQUIRE(dir != nullptr);
    return std::string(dir);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

CliResult run_cli(const std::string& args) {
    const std::string capture = fresh_dir() + "/out.txt";
    const std::string cmd = std::string("THETA_INCL_LOG=quiet ") + THETAINCL_CLI_PATH + " " +
                            args + " > " + capture + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    res.output = slurp(capture);
    return res;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

const std::string kDeskConfig = R"({
  "scenario": "ode_desk",
  "theta": 1.0,
  "grid": {"kind": "uniform", "N": 4}
})";

} // namespace

TEST_CASE("solve: desk scenario produces the closed-form march") {
    const std::string dir = fresh_dir();
    spit(dir + "/config.json", kDeskConfig);
    const CliResult res =
        run_cli("solve --config " + dir + "/config.json --out " + dir + "/run");
    CHECK(res.code == 0);

    const std::string states = slurp(dir + "/run/states.csv");
    CHECK(states.find('\r') == std::string::npos);
    CHECK(states.find(';') == std::string::npos);
    const std::vector<std::string> rows = lines_of(states);
    REQUIRE(rows.size() == 6); // header + 5 grid points
    CHECK(rows[0] == "t,u0");
    double expect = 1.0;
    for (int k = 1; k <= 4; ++k) {
        expect *= 0.8;
        const std::string& row = rows[static_cast<std::size_t>(k) + 1];
        const std::size_t comma = row.find(',');
        REQUIRE(comma != std::string::npos);
        const double t = std::strtod(row.substr(0, comma).c_str(), nullptr);
        const double u = std::strtod(row.substr(comma + 1).c_str(), nullptr);
        CHECK(t == doctest::Approx(0.25 * k).epsilon(1e-15));
        CHECK(u == doctest::Approx(expect).epsilon(1e-12));
    }
    // The report carries the residual certificate and the identity check.
    const std::string report = slurp(dir + "/run/report.json");
    CHECK(report.find("\"checks\"") != std::string::npos);
    CHECK(report.find("\"bbb_residual\"") != std::string::npos);
}

TEST_CASE("solve: identical config and seed give byte-identical outputs") {
    const std::string dir = fresh_dir();
    spit(dir + "/config.json", R"({
      "scenario": "jump_source",
      "theta": 0.75,
      "grid": {"kind": "random_regular", "N": 6, "K_target": 2.0, "seed": 11},
      "mesh": {"elements": 24}
    })");
    CHECK(run_cli("solve --config " + dir + "/config.json --out " + dir + "/a").code == 0);
    CHECK(run_cli("solve --config " + dir + "/config.json --out " + dir + "/b").code == 0);
    for (const char* name : {"states.csv", "mids.csv", "selections.csv", "records.csv",
                             "report.json", "run.json"}) {
        CHECK(slurp(dir + "/a/" + name) == slurp(dir + "/b/" + name));
    }
}

TEST_CASE("solve: configuration errors exit with code 2 and a parse context") {
    const std::string dir = fresh_dir();

    spit(dir + "/theta0.json", R"({"scenario": "ode_desk", "theta": 0.0,
                                   "grid": {"kind": "uniform", "N": 4}})");
    CliResult res = run_cli("solve --config " + dir + "/theta0.json --out " + dir + "/r1");
    CHECK(res.code == 2);
    CHECK(res.output.find("config error:") != std::string::npos);
    CHECK(res.output.find("theta = 0") != std::string::npos);

    spit(dir + "/unknown_key.json", R"({"scenario": "ode_desk", "theta": 1.0,
                                        "grid": {"kind": "uniform", "N": 4},
                                        "extra": 1})");
    res = run_cli("solve --config " + dir + "/unknown_key.json --out " + dir + "/r2");
    CHECK(res.code == 2);
    CHECK(res.output.find("extra") != std::string::npos);

    spit(dir + "/broken.json", "{\"scenario\": \"ode_desk\",");
    res = run_cli("solve --config " + dir + "/broken.json --out " + dir + "/r3");
    CHECK(res.code == 2);

    spit(dir + "/noscen.json", R"({"scenario": "unknown_one", "theta": 1.0,
                                   "grid": {"kind": "uniform", "N": 4}})");
    res = run_cli("solve --config " + dir + "/noscen.json --out " + dir + "/r4");
    CHECK(res.code == 2);
    CHECK(res.output.find("unknown_one") != std::string::npos);

    res = run_cli("solve --config " + dir + "/absent.json --out " + dir + "/r5");
    CHECK(res.code == 2);

    // Bad usage (missing required option) also maps to the config exit code.
    CHECK(run_cli("solve --out " + dir + "/r6").code == 2);
    CHECK(run_cli("--help").code == 0);
}

TEST_CASE("solve: a starved solver exits with code 3") {
    const std::string dir = fresh_dir();
    spit(dir + "/config.json", R"({
      "scenario": "plap_jump",
      "theta": 1.0,
      "grid": {"kind": "uniform", "N": 4},
      "mesh": {"elements": 16},
      "solver": {"newton_max_iter": 1, "picard_fallback": false}
    })");
    const CliResult res =
        run_cli("solve --config " + dir + "/config.json --out " + dir + "/run");
    CHECK(res.code == 3);
    CHECK(res.output.find("solver error:") != std::string::npos);
}

TEST_CASE("validate: known scenario passes, unknown name is a config error") {
    const CliResult ok = run_cli("validate --scenario heat");
    CHECK(ok.code == 0);
    CHECK(ok.output.find("pass") != std::string::npos);
    CHECK(run_cli("validate --scenario nonsense").code == 2);
}

TEST_CASE("diagnose: accepts a fresh run and rejects a tampered one") {
    const std::string dir = fresh_dir();
    spit(dir + "/config.json", R"({
      "scenario": "jump_source",
      "theta": 1.0,
      "grid": {"kind": "uniform", "N": 6},
      "mesh": {"elements": 24}
    })");
    REQUIRE(run_cli("solve --config " + dir + "/config.json --out " + dir + "/run").code == 0);
    CHECK(run_cli("diagnose --trajectory " + dir + "/run").code == 0);
    const std::string verdict = slurp(dir + "/run/diagnose.json");
    CHECK(verdict.find("\"pass\": true") != std::string::npos);

    // Corrupt one interior nodal value (the first column after t is the
    // constrained boundary node, which a recomputation never reads): the
    // stored residual certificates no longer match the trajectory.
    const std::string states = slurp(dir + "/run/states.csv");
    std::vector<std::string> rows = lines_of(states);
    REQUIRE(rows.size() >= 4);
    std::vector<std::string> fields;
    std::istringstream row_in(rows[3]);
    std::string field;
    while (std::getline(row_in, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() >= 3);
    fields[2] = "0.123456";
    std::string rebuilt = fields[0];
    for (std::size_t i = 1; i < fields.size(); ++i) rebuilt += "," + fields[i];
    rows[3] = rebuilt;
    std::string tampered;
    for (const std::string& row : rows) tampered += row + "\n";
    spit(dir + "/run/states.csv", tampered);
    const CliResult bad = run_cli("diagnose --trajectory " + dir + "/run");
    CHECK(bad.code == 4);
    CHECK(bad.output.find("validation failed:") != std::string::npos);

    // A missing trajectory directory is a config error, not a validation one.
    CHECK(run_cli("diagnose --trajectory " + dir + "/nowhere").code == 2);
}

TEST_CASE("study: two-level family runs, merges deterministically, omits orders") {
    const std::string dir = fresh_dir();
    spit(dir + "/plan.json", R"({
      "scenario": "ode_desk",
      "thetas": [1.0, 0.5],
      "family": {"kind": "uniform", "N0": 4},
      "levels": 2
    })");
    const CliResult res =
        run_cli("study --plan " + dir + "/plan.json --out " + dir + "/study --jobs 2");
    CHECK(res.code == 0);

    const std::vector<std::string> rows = lines_of(slurp(dir + "/study/summary.csv"));
    REQUIRE(rows.size() == 5); // header + 2 thetas x 2 levels
    CHECK(rows[0].rfind("theta,N,K_observed,r_max,tau_max", 0) == 0);
    // Ordered merge: theta ascending, then N ascending.
    CHECK(rows[1].rfind("0.5,4,", 0) == 0);
    CHECK(rows[2].rfind("0.5,8,", 0) == 0);
    CHECK(rows[3].rfind("1,4,", 0) == 0);
    CHECK(rows[4].rfind("1,8,", 0) == 0);

    const std::string study = slurp(dir + "/study/study.json");
    CHECK(study.find("fewer than 3 grids") != std::string::npos);

    // Per-run directories persist the member trajectories.
    CHECK(slurp(dir + "/study/run_t1_N4/states.csv").find("t,u0") == 0);
    CHECK(slurp(dir + "/study/run_t0.5_N8/report.json").find("\"theta\": 0.5") !=
          std::string::npos);

    // The same plan executed serially is byte-identical.
    REQUIRE(run_cli("study --plan " + dir + "/plan.json --out " + dir + "/serial").code == 0);
    CHECK(slurp(dir + "/serial/summary.csv") == slurp(dir + "/study/summary.csv"));
    CHECK(slurp(dir + "/serial/study.json") == slurp(dir + "/study/study.json"));
}
