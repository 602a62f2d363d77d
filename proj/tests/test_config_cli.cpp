#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aoi/cli.hpp"
#include "aoi/config.hpp"

using namespace aoi;

namespace {

const char* full_config = R"(
# paper setup
m = 3
tick = 1/4
dist.family = two_point
dist.low = 0
dist.high = 3
dist.p = 0.5
grid.max = 3
grid.step = 0.25
solver.eps1 = 1e-4
solver.eps2 = 1e-9
roster = maf:table, maf:zero, rand:zero, maf:const:0.3ey, maf:waterfill
sim.n = 20000
sim.burn_in = 1000
sim.seed = 42
sim.replications = 2
sweep.from = 0.2
sweep.to = 0.8
sweep.step = 0.3
)";

ExperimentConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return ExperimentConfig::parse(in);
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = parse_text(full_config);
    CHECK(cfg.m == 3);
    CHECK(cfg.tick == Rational{1, 4});
    CHECK(cfg.two_point_family);
    CHECK(cfg.two_point_p == 0.5);
    CHECK(cfg.roster.size() == 5);
    CHECK(cfg.roster[0].label() == "maf:table");
    CHECK(cfg.roster[2].label() == "rand:zero");
    CHECK(cfg.roster[3].sampler.resolve_constant(1.5) == doctest::Approx(0.45));
    CHECK(cfg.sweep.points().size() == 3);
    CHECK(cfg.seed == 42);
    CHECK(cfg.distribution().mean() == doctest::Approx(1.5));
    CHECK(cfg.distribution(0.9).mean() == doctest::Approx(0.3));
    CHECK(cfg.wait_grid().size() == 13);
}

TEST_CASE("config validation errors carry the violated invariant") {
    CHECK_THROWS_AS(parse_text("m = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("roster =\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("sim.burn_in = 2\nm = 3\n"), ConfigError);   // burn_in < m
    CHECK_THROWS_AS(parse_text("nonsense = 1\n"), ConfigError);             // unknown key
    CHECK_THROWS_AS(parse_text("m = 1\nm = 2\n"), ConfigError);             // duplicate key
    CHECK_THROWS_AS(parse_text("dist = 1:0.5, 2:0.5\ndist.family = two_point\n"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("dist = 1:0.5, 2:0.4\n"),
                         doctest::Contains("sum to 1"), ConfigError);       // probabilities sum 0.9
    CHECK_THROWS_AS(parse_text("grid.step = 0.3\n"), ConfigError);          // off the default tick
    CHECK_THROWS_AS(parse_text("roster = maf:frobnicate\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("roster = quantum:zero\n"), ConfigError);
    CHECK_THROWS_AS(parse_text("sweep.step = -0.1\n"), ConfigError);
}

TEST_CASE("explicit-atom distributions disable p sweeps") {
    const ExperimentConfig cfg = parse_text("dist = 1:0.5, 2:0.5\ntick = 1\ngrid.max = 2\ngrid.step = 1\n");
    CHECK(!cfg.two_point_family);
    CHECK(cfg.distribution().support_size() == 2);
    CHECK_THROWS_AS(cfg.distribution(0.5), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
    const ExperimentConfig a = parse_text(full_config);
    const ExperimentConfig b = parse_text(full_config);
    CHECK(a.hash_hex() == b.hash_hex());
    ExperimentConfig c = a;
    c.seed = 43;
    CHECK(a.hash_hex() != c.hash_hex());
}

TEST_CASE("cmd_solve writes a loadable policy and a summary") {
    ExperimentConfig cfg = parse_text("m = 1\ntick = 1\ndist = 2:1.0\ngrid.max = 0\ngrid.step = 1\n");
    const std::string path = tmp_path("aoisim_test_policy.txt");
    std::ostringstream summary;
    CHECK(cmd_solve(cfg, path, summary) == exit_ok);
    const std::string text = summary.str();
    const auto pos = text.find("beta_star ");
    REQUIRE(pos != std::string::npos);
    const double reported = parse_double(text.substr(pos + 10, text.find('\n', pos) - pos - 10), "beta");
    CHECK(std::abs(reported - 3.0) <= 1e-4);  // 1.5 c for c=2
    CHECK(text.find("threshold_property_verified true") != std::string::npos);
    CHECK(text.find("bisection_convention lemma1") != std::string::npos);

    std::ifstream file(path);
    REQUIRE(file.good());
    const PolicyTable loaded = PolicyTable::load(file);
    CHECK(std::abs(loaded.beta_star() - 3.0) <= 1e-4);
    std::filesystem::remove(path);
}

TEST_CASE("cmd_simulate produces deterministic CSV with one row per roster entry") {
    ExperimentConfig cfg = parse_text(full_config);
    cfg.roster = {RosterEntry::parse("maf:zero"), RosterEntry::parse("rand:zero"),
                  RosterEntry::parse("maf:const:0.3ey"), RosterEntry::parse("maf:waterfill")};
    cfg.sim_n = 20000;
    cfg.waterfill_eval_n = 20000;
    std::ostringstream a, b;
    CHECK(cmd_simulate(cfg, "", a) == exit_ok);
    CHECK(cmd_simulate(cfg, "", b) == exit_ok);
    CHECK(a.str() == b.str());  // byte-identical reruns

    std::istringstream lines(a.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == csv_schema);
    std::getline(lines, line);
    CHECK(line == csv_columns);
    int rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
    CHECK(a.str().find("maf:const:0.3ey,") != std::string::npos);
    CHECK(a.str().find(cfg.hash_hex()) != std::string::npos);
}

TEST_CASE("cmd_simulate requires a policy file for table rosters") {
    ExperimentConfig cfg = parse_text(full_config);
    cfg.roster = {RosterEntry::parse("maf:table")};
    std::ostringstream out;
    CHECK_THROWS_AS(cmd_simulate(cfg, "", out), MissingArtifactError);
    CHECK_THROWS_AS(cmd_simulate(cfg, tmp_path("definitely_missing_policy.txt"), out),
                    MissingArtifactError);
}

TEST_CASE("cmd_simulate rejects a policy solved for a different instance") {
    ExperimentConfig small = parse_text("m = 1\ntick = 1\ndist = 2:1.0\ngrid.max = 0\ngrid.step = 1\n");
    const std::string path = tmp_path("aoisim_mismatch_policy.txt");
    std::ostringstream summary;
    cmd_solve(small, path, summary);

    ExperimentConfig cfg = parse_text(full_config);
    cfg.roster = {RosterEntry::parse("maf:table")};
    std::ostringstream out;
    CHECK_THROWS_AS(cmd_simulate(cfg, path, out), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("cmd_simulate can export per-delivery traces") {
    ExperimentConfig cfg = parse_text("m = 2\ntick = 1\ndist = 1:0.5, 2:0.5\ngrid.max = 1\n"
                                      "grid.step = 1\nroster = maf:zero\nsim.n = 50\n"
                                      "sim.burn_in = 5\nsim.replications = 1\n");
    const std::string prefix = tmp_path("aoisim_trace_");
    std::ostringstream out;
    CHECK(cmd_simulate(cfg, "", out, prefix) == exit_ok);
    std::ifstream trace(prefix + "maf_zero.csv");
    REQUIRE(trace.good());
    std::string line;
    std::getline(trace, line);
    CHECK(line == "# aoisim-trace v1");
    std::getline(trace, line);
    CHECK(line == "i,source,S,D,Z,Y,peak,age1,age2");
    int rows = 0;
    while (std::getline(trace, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 50);
    std::filesystem::remove(prefix + "maf_zero.csv");
}

TEST_CASE("cmd_sweep emits rows in sweep order, worker count irrelevant") {
    ExperimentConfig cfg = parse_text(full_config);
    cfg.roster = {RosterEntry::parse("maf:zero"), RosterEntry::parse("rand:zero")};
    cfg.sim_n = 10000;
    cfg.sim_burn_in = 500;
    cfg.replications = 2;
    std::ostringstream one, two;
    CHECK(cmd_sweep(cfg, one, 1) == exit_ok);
    CHECK(cmd_sweep(cfg, two, 3) == exit_ok);
    CHECK(one.str() == two.str());

    // 3 sweep points x 2 roster entries
    int rows = 0;
    std::istringstream lines(one.str());
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty() && line[0] != '#' && line.rfind("label,", 0) != 0) ++rows;
    CHECK(rows == 6);

    // zero-wait TaPA tracks 12(1-p) loosely even at this short run length
    std::istringstream again(one.str());
    std::getline(again, line);
    std::getline(again, line);
    while (std::getline(again, line)) {
        const auto cols = split(line, ',');
        if (cols[0] != "maf:zero") continue;
        const double p = parse_double(cols[1], "p");
        const double tapa = parse_double(cols[2], "tapa");
        CHECK(std::abs(tapa - 12.0 * (1.0 - p)) / (12.0 * (1.0 - p)) < 0.05);
    }
}

TEST_CASE("a fixed waterfill.th skips the search; th=0 reproduces zero-wait") {
    ExperimentConfig cfg = parse_text("roster = maf:waterfill, maf:zero\nsim.n = 20000\n"
                                      "sim.burn_in = 100\nsim.replications = 1\n"
                                      "waterfill.th = 0\n");
    std::ostringstream out;
    CHECK(cmd_simulate(cfg, "", out) == exit_ok);
    std::istringstream lines(out.str());
    std::string line, wf_line, zero_line;
    while (std::getline(lines, line)) {
        if (line.rfind("maf:waterfill,", 0) == 0) wf_line = line;
        if (line.rfind("maf:zero,", 0) == 0) zero_line = line;
    }
    REQUIRE(!wf_line.empty());
    const auto wf_cols = split(wf_line, ',');
    const auto zero_cols = split(zero_line, ',');
    CHECK(wf_cols[4] == zero_cols[4]);  // identical TaA, identical sample path
    CHECK(wf_cols[2] == zero_cols[2]);  // identical TaPA
    CHECK(parse_double(wf_cols[11], "th") == 0.0);
}

TEST_CASE("cmd_sweep flags partial output when a point fails") {
    ExperimentConfig cfg = parse_text(full_config);
    cfg.roster = {RosterEntry::parse("maf:table")};
    cfg.solver.max_bisect_iters = 1;  // cannot close the bracket -> solver failure
    std::ostringstream out;
    CHECK_THROWS_AS(cmd_sweep(cfg, out, 1), SolverError);
    CHECK(out.str().find("# PARTIAL") != std::string::npos);
}

TEST_CASE("cmd_verify passes on a small instance") {
    ExperimentConfig cfg = parse_text("m = 2\ntick = 1\ndist = 1:0.5, 2:0.5\ngrid.max = 1\n"
                                      "grid.step = 1\nroster = maf:zero\nsim.n = 20000\n"
                                      "sim.burn_in = 100\nverify.seeds = 3\n");
    std::ostringstream out;
    CHECK(cmd_verify(cfg, out) == exit_ok);
    CHECK(out.str().find("battery=oracle status=pass") != std::string::npos);
    CHECK(out.str().find("configured=included") != std::string::npos);
    CHECK(out.str().find("battery=coupling status=pass") != std::string::npos);
    CHECK(out.str().find("battery=monotonicity status=pass") != std::string::npos);
    CHECK(out.str().find("battery=threshold status=pass") != std::string::npos);
    CHECK(out.str().find("battery=saturation status=pass") != std::string::npos);
}
