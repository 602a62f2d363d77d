#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/model.hpp"
#include "aoi/sim.hpp"
#include "aoi/solver.hpp"
#include "aoi/text.hpp"

namespace aoi {

// Exit-code convention: 0 ok, 2 config error, 3 missing artifact,
// 4 solver failure, 5 verification failure.
enum ExitCode : int {
    exit_ok = 0,
    exit_config_error = 2,
    exit_missing_artifact = 3,
    exit_solver_failure = 4,
    exit_verification_failure = 5,
};

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class MissingArtifactError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class VerificationFailure : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplerSpec {
    enum class Kind { Zero, Constant, Table, WaterFill };
    Kind kind = Kind::Zero;
    double constant = 0.0;          // absolute wait, or factor when constant_is_ey_factor
    bool constant_is_ey_factor = false;
    std::string raw;                // original token, kept for stable labels

    /// Tokens: "zero", "const:<c>", "const:<f>ey" (factor of E[Y]), "table", "waterfill".
    static SamplerSpec parse(std::string_view token) {
        SamplerSpec s;
        s.raw = std::string(token);
        if (token == "zero") return s;
        if (token == "table") {
            s.kind = Kind::Table;
            return s;
        }
        if (token == "waterfill") {
            s.kind = Kind::WaterFill;
            return s;
        }
        if (token.rfind("const:", 0) == 0) {
            s.kind = Kind::Constant;
            std::string_view v = token.substr(6);
            if (v.size() > 2 && v.substr(v.size() - 2) == "ey") {
                s.constant_is_ey_factor = true;
                v = v.substr(0, v.size() - 2);
            }
            s.constant = parse_double(v, "const sampler");
            if (s.constant < 0.0) throw ConfigError("roster: constant wait must be >= 0");
            return s;
        }
        throw ConfigError("roster: unknown sampler token '" + std::string(token) + "'");
    }

    std::string str() const {
        if (!raw.empty()) return raw;
        switch (kind) {
            case Kind::Zero: return "zero";
            case Kind::Table: return "table";
            case Kind::WaterFill: return "waterfill";
            case Kind::Constant:
                return "const:" + format_g17(constant) + (constant_is_ey_factor ? "ey" : "");
        }
        return "?";
    }

    double resolve_constant(double mean_service) const {
        return constant_is_ey_factor ? constant * mean_service : constant;
    }
};

struct RosterEntry {
    bool maf = true;  // false = RAND scheduler
    SamplerSpec sampler;

    static RosterEntry parse(std::string_view token) {
        const auto colon = token.find(':');
        if (colon == std::string_view::npos)
            throw ConfigError("roster: entry must look like 'maf:zero', got '" + std::string(token) + "'");
        const std::string_view sched = token.substr(0, colon);
        RosterEntry e;
        if (sched == "maf")
            e.maf = true;
        else if (sched == "rand")
            e.maf = false;
        else
            throw ConfigError("roster: unknown scheduler '" + std::string(sched) + "'");
        e.sampler = SamplerSpec::parse(token.substr(colon + 1));
        return e;
    }

    std::string label() const { return (maf ? "maf:" : "rand:") + sampler.str(); }
};

struct SweepSpec {
    double from = 0.1, to = 0.9, step = 0.1;

    std::vector<double> points() const {
        std::vector<double> out;
        for (double p = from; p <= to + 1e-12; p += step) out.push_back(p);
        return out;
    }
};

/// Full experiment description parsed from the flat key-value config format.
struct ExperimentConfig {
    int m = 3;
    Rational tick{1, 4};

    // Distribution: either explicit atoms, or the two-point family
    // parameterized by p = P(Y = low) (the form the sweeps use).
    std::vector<std::pair<Rational, double>> dist_atoms;
    bool two_point_family = true;
    Rational two_point_low{0, 1};
    Rational two_point_high{3, 1};
    double two_point_p = 0.5;

    Rational grid_max{3, 1};
    Rational grid_step{1, 4};

    SolverConfig solver;
    long sim_n = 1000000;
    long sim_burn_in = 1000;
    std::uint64_t seed = 1;
    int replications = 5;

    std::vector<RosterEntry> roster = {RosterEntry::parse("maf:zero")};
    SweepSpec sweep;

    double waterfill_tol = 1e-3;
    long waterfill_eval_n = 200000;
    long waterfill_eval_burn_in = 1000;
    double waterfill_search_hi = -1.0;  // <=0: default to zero_wait_taa/m
    double waterfill_th = -1.0;         // >=0: fixed threshold, no search

    double oracle_max_policies = 1e6;
    std::size_t space_max_states = 2'000'000;
    int verify_seeds = 10;

    static ExperimentConfig from_keys(const std::map<std::string, std::string>& kv) {
        ExperimentConfig c;
        bool saw_atoms = false, saw_family = false;
        for (const auto& [key, value] : kv) {
            try {
                if (key == "m") c.m = static_cast<int>(parse_int(value, "m"));
                else if (key == "tick") c.tick = Rational::parse(value);
                else if (key == "dist") {
                    saw_atoms = true;
                    c.dist_atoms.clear();
                    for (const auto& item : split(value, ',')) {
                        const auto parts = split(item, ':');
                        if (parts.size() != 2) throw ConfigError("dist: entries must be value:prob");
                        c.dist_atoms.emplace_back(Rational::parse(parts[0]),
                                                  parse_double(parts[1], "dist prob"));
                    }
                } else if (key == "dist.family") {
                    if (value != "two_point") throw ConfigError("dist.family: only 'two_point' is supported");
                    saw_family = true;
                } else if (key == "dist.low") c.two_point_low = Rational::parse(value);
                else if (key == "dist.high") c.two_point_high = Rational::parse(value);
                else if (key == "dist.p") c.two_point_p = parse_double(value, "dist.p");
                else if (key == "grid.max") c.grid_max = Rational::parse(value);
                else if (key == "grid.step") c.grid_step = Rational::parse(value);
                else if (key == "solver.eps1") c.solver.eps1 = parse_double(value, key.c_str());
                else if (key == "solver.eps2") c.solver.eps2 = parse_double(value, key.c_str());
                else if (key == "solver.max_rvi_iters") c.solver.max_rvi_iters = parse_int(value, key.c_str());
                else if (key == "solver.max_bisect_iters")
                    c.solver.max_bisect_iters = static_cast<int>(parse_int(value, key.c_str()));
                else if (key == "solver.tau") c.solver.tau = parse_double(value, key.c_str());
                else if (key == "sim.n") c.sim_n = parse_int(value, key.c_str());
                else if (key == "sim.burn_in") c.sim_burn_in = parse_int(value, key.c_str());
                else if (key == "sim.seed") c.seed = static_cast<std::uint64_t>(parse_int(value, key.c_str()));
                else if (key == "sim.replications")
                    c.replications = static_cast<int>(parse_int(value, key.c_str()));
                else if (key == "roster") {
                    c.roster.clear();
                    for (const auto& item : split(value, ','))
                        if (!item.empty()) c.roster.push_back(RosterEntry::parse(item));
                } else if (key == "sweep.from") c.sweep.from = parse_double(value, key.c_str());
                else if (key == "sweep.to") c.sweep.to = parse_double(value, key.c_str());
                else if (key == "sweep.step") c.sweep.step = parse_double(value, key.c_str());
                else if (key == "sweep.var") {
                    if (value != "p") throw ConfigError("sweep.var: only 'p' is supported");
                } else if (key == "waterfill.tol") c.waterfill_tol = parse_double(value, key.c_str());
                else if (key == "waterfill.eval_n") c.waterfill_eval_n = parse_int(value, key.c_str());
                else if (key == "waterfill.eval_burn_in")
                    c.waterfill_eval_burn_in = parse_int(value, key.c_str());
                else if (key == "waterfill.search_hi")
                    c.waterfill_search_hi = parse_double(value, key.c_str());
                else if (key == "waterfill.th") c.waterfill_th = parse_double(value, key.c_str());
                else if (key == "oracle.max_policies")
                    c.oracle_max_policies = parse_double(value, key.c_str());
                else if (key == "space.max_states")
                    c.space_max_states = static_cast<std::size_t>(parse_int(value, key.c_str()));
                else if (key == "verify.seeds")
                    c.verify_seeds = static_cast<int>(parse_int(value, key.c_str()));
                else
                    throw ConfigError("unknown config key '" + key + "'");
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        }
        if (saw_atoms) c.two_point_family = false;
        if (saw_atoms && saw_family)
            throw ConfigError("config: give either 'dist' atoms or 'dist.family', not both");
        c.validate();
        return c;
    }

    /// Lines of 'key = value', '#' comments, blank lines allowed.
    static ExperimentConfig parse(std::istream& in) {
        std::map<std::string, std::string> kv;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string_view body = trim_view(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key(trim_view(body.substr(0, eq)));
            const std::string value(trim_view(body.substr(eq + 1)));
            if (!kv.emplace(key, value).second)
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        return from_keys(kv);
    }

    void validate() const {
        if (m < 1) throw ConfigError("config: m must be >= 1");
        if (roster.empty()) throw ConfigError("config: roster must not be empty");
        if (sim_burn_in < m)
            throw ConfigError("config: sim.burn_in must be >= m (the first m deliveries are transient)");
        if (sim_burn_in >= sim_n) throw ConfigError("config: sim.burn_in must be < sim.n");
        if (replications < 1) throw ConfigError("config: sim.replications must be >= 1");
        if (sweep.step <= 0.0 || sweep.from > sweep.to + 1e-12)
            throw ConfigError("config: bad sweep range");
        if (!two_point_family && dist_atoms.empty()) throw ConfigError("config: empty distribution");
        if (two_point_family && (two_point_p < 0.0 || two_point_p > 1.0))
            throw ConfigError("config: dist.p must lie in [0,1]");
        try {
            solver.validate();
            distribution();
            wait_grid();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    /// Instantiates the service distribution, optionally overriding the
    /// two-point p (used by sweeps).
    ServiceDistribution distribution(std::optional<double> p_override = std::nullopt) const {
        if (two_point_family)
            return ServiceDistribution::two_point(tick, two_point_low, two_point_high,
                                                  p_override.value_or(two_point_p));
        if (p_override)
            throw ConfigError("config: sweeping p requires the two-point distribution family");
        return ServiceDistribution::from_times(tick, dist_atoms);
    }

    WaitGrid wait_grid() const { return WaitGrid::from_times(tick, grid_max, grid_step); }

    SimConfig sim_config() const {
        SimConfig s;
        s.n_deliveries = sim_n;
        s.burn_in = sim_burn_in;
        s.seed = seed;
        return s;
    }

    /// Canonical serialization of the effective configuration; basis of the
    /// config hash carried in every CSV row.
    std::string canonical_text() const {
        std::ostringstream out;
        out << "m=" << m << "\ntick=" << tick.str() << "\n";
        if (two_point_family)
            out << "dist.family=two_point\ndist.low=" << two_point_low.str()
                << "\ndist.high=" << two_point_high.str() << "\ndist.p=" << format_g17(two_point_p)
                << "\n";
        else {
            out << "dist=";
            for (std::size_t i = 0; i < dist_atoms.size(); ++i)
                out << (i ? "," : "") << dist_atoms[i].first.str() << ":"
                    << format_g17(dist_atoms[i].second);
            out << "\n";
        }
        out << "grid.max=" << grid_max.str() << "\ngrid.step=" << grid_step.str() << "\n";
        out << "solver.eps1=" << format_g17(solver.eps1) << "\nsolver.eps2=" << format_g17(solver.eps2)
            << "\nsolver.max_rvi_iters=" << solver.max_rvi_iters
            << "\nsolver.max_bisect_iters=" << solver.max_bisect_iters
            << "\nsolver.tau=" << format_g17(solver.tau) << "\n";
        out << "sim.n=" << sim_n << "\nsim.burn_in=" << sim_burn_in << "\nsim.seed=" << seed
            << "\nsim.replications=" << replications << "\n";
        out << "roster=";
        for (std::size_t i = 0; i < roster.size(); ++i) out << (i ? "," : "") << roster[i].label();
        out << "\n";
        out << "sweep.from=" << format_g17(sweep.from) << "\nsweep.to=" << format_g17(sweep.to)
            << "\nsweep.step=" << format_g17(sweep.step) << "\n";
        out << "waterfill.tol=" << format_g17(waterfill_tol)
            << "\nwaterfill.eval_n=" << waterfill_eval_n
            << "\nwaterfill.eval_burn_in=" << waterfill_eval_burn_in
            << "\nwaterfill.search_hi=" << format_g17(waterfill_search_hi)
            << "\nwaterfill.th=" << format_g17(waterfill_th) << "\n";
        out << "oracle.max_policies=" << format_g17(oracle_max_policies)
            << "\nspace.max_states=" << space_max_states << "\nverify.seeds=" << verify_seeds
            << "\n";
        return out.str();
    }

    std::uint64_t hash() const { return fnv1a64(canonical_text()); }

    std::string hash_hex() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
        return buf;
    }
};

}  // namespace aoi
