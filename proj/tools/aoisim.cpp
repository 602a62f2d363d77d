// aoisim: solver + simulator for age-of-information-optimal sampling and
// scheduling in multi-source status-update systems.
//
// Subcommands:
//   solve     solve the TaA-optimal threshold sampler, write the policy table
//   simulate  evaluate the configured scheduler/sampler roster, emit CSV
//   sweep     repeat solve+simulate across the swept transmission probability
//   verify    run the oracle/coupling/monotonicity/threshold/saturation batteries

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "aoi/cli.hpp"

namespace {

aoi::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets,
                                  std::optional<std::uint64_t> seed_override) {
    std::map<std::string, std::string> kv;
    if (!path.empty()) {
        std::ifstream file(path);
        if (!file) throw aoi::MissingArtifactError("config file '" + path + "' not found");
        std::string line;
        int lineno = 0;
        while (std::getline(file, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string_view body = aoi::trim_view(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                throw aoi::ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            kv[std::string(aoi::trim_view(body.substr(0, eq)))] =
                std::string(aoi::trim_view(body.substr(eq + 1)));
        }
    }
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw aoi::ConfigError("--set expects key=value, got '" + s + "'");
        kv[std::string(aoi::trim_view(std::string_view(s).substr(0, eq)))] =
            std::string(aoi::trim_view(std::string_view(s).substr(eq + 1)));
    }
    if (seed_override) kv["sim.seed"] = std::to_string(*seed_override);
    return aoi::ExperimentConfig::from_keys(kv);
}

struct OutStream {
    std::ofstream file;
    std::ostream& get(const std::string& path) {
        if (path.empty()) return std::cout;
        file.open(path);
        if (!file) throw aoi::MissingArtifactError("cannot open output path '" + path + "'");
        return file;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"age-of-information sampling/scheduling solver and simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path, policy_path = "policy.txt", trace_prefix;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed_override;
    int workers = 1;

    app.add_option("-c,--config", config_path, "config file (key = value lines)");
    app.add_option("--set", sets, "override a config key, e.g. --set sim.seed=7");
    app.add_option("--seed", seed_override, "override sim.seed");
    app.add_option("-o,--out", out_path, "output path (default: stdout; solve: policy.txt)");

    auto* solve = app.add_subcommand("solve", "solve the TaA-optimal threshold sampler");
    auto* simulate = app.add_subcommand("simulate", "simulate the configured roster");
    simulate->add_option("--policy", policy_path, "policy file for table samplers");
    simulate->add_option("--trace", trace_prefix, "write per-delivery trace CSVs with this prefix");
    auto* sweep = app.add_subcommand("sweep", "sweep the transmission probability p");
    sweep->add_option("-j,--workers", workers, "concurrent sweep points");
    auto* verify = app.add_subcommand("verify", "run the verification batteries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return aoi::exit_config_error;
    }

    try {
        const aoi::ExperimentConfig cfg = load_config(config_path, sets, seed_override);
        OutStream out;
        if (solve->parsed())
            return aoi::cmd_solve(cfg, out_path.empty() ? policy_path : out_path, std::cout);
        if (simulate->parsed()) {
            // --policy default only applies when a table sampler is actually used
            bool needs_table = false;
            for (const auto& e : cfg.roster)
                needs_table |= e.sampler.kind == aoi::SamplerSpec::Kind::Table;
            return aoi::cmd_simulate(cfg, needs_table ? policy_path : "", out.get(out_path), trace_prefix);
        }
        if (sweep->parsed()) return aoi::cmd_sweep(cfg, out.get(out_path), workers);
        if (verify->parsed()) return aoi::cmd_verify(cfg, out.get(out_path));
        return aoi::exit_config_error;
    } catch (const aoi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return aoi::exit_config_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return aoi::exit_config_error;
    } catch (const aoi::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return aoi::exit_missing_artifact;
    } catch (const aoi::VerificationFailure& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return aoi::exit_verification_failure;
    } catch (const aoi::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return aoi::exit_solver_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return aoi::exit_solver_failure;
    }
}
