#pragma once

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aoi/config.hpp"
#include "aoi/oracle.hpp"
#include "aoi/sim.hpp"
#include "aoi/solver.hpp"

namespace aoi {

inline constexpr const char* csv_schema = "# aoisim-csv v1";
inline constexpr const char* csv_columns =
    "label,p,tapa,tapa_hw,taa,taa_hw,n,replications,seed,config_hash,beta_star,wf_threshold";

struct CsvRow {
    std::string label;
    std::optional<double> p;
    CiEstimate est;
    long n = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::optional<double> beta_star;
    std::optional<double> wf_threshold;

    std::string line() const {
        auto opt = [](const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); };
        std::ostringstream out;
        out << label << "," << opt(p) << "," << format_g17(est.tapa) << "," << format_g17(est.tapa_hw)
            << "," << format_g17(est.taa) << "," << format_g17(est.taa_hw) << "," << n << ","
            << est.replications << "," << seed << "," << config_hash << "," << opt(beta_star) << ","
            << opt(wf_threshold);
        return out.str();
    }
};

namespace detail {

inline Sampler make_sampler(const SamplerSpec& spec, const ServiceDistribution& dist,
                            const PolicyTable* table, const std::optional<WaterFillPolicy>& wf) {
    switch (spec.kind) {
        case SamplerSpec::Kind::Zero: return Sampler::zero_wait();
        case SamplerSpec::Kind::Constant:
            return Sampler::constant_wait(spec.resolve_constant(dist.mean()));
        case SamplerSpec::Kind::Table:
            if (!table) throw MissingArtifactError("table sampler requested but no policy available");
            return Sampler::table(*table);
        case SamplerSpec::Kind::WaterFill:
            if (!wf) throw std::logic_error("water-fill sampler requested but no threshold searched");
            return Sampler::water_fill(*wf);
    }
    throw std::logic_error("make_sampler: unreachable");
}

inline std::size_t grid_action_index(const WaitGrid& grid, Tick wait) {
    if (grid.step() > 0 && wait % grid.step() == 0 && wait >= 0 && wait <= grid.max_wait())
        return static_cast<std::size_t>(wait / grid.step());
    if (wait == 0) return 0;
    throw std::logic_error("grid_action_index: wait off the grid");
}

}  // namespace detail

/// Evaluates one experiment instance (one sweep point): optional solve,
/// optional water-fill threshold search, then one CSV row per roster entry.
struct PointResult {
    std::vector<CsvRow> rows;
    std::optional<double> beta_star;
    std::optional<double> wf_threshold;
};

inline PointResult evaluate_point(const ExperimentConfig& cfg, std::optional<double> p,
                                  const PolicyTable* external_policy, bool may_solve) {
    const ServiceDistribution dist = cfg.distribution(p);
    const WaitGrid grid = cfg.wait_grid();
    const int m = cfg.m;

    bool needs_table = false, needs_wf = false;
    for (const auto& e : cfg.roster) {
        needs_table |= e.sampler.kind == SamplerSpec::Kind::Table;
        needs_wf |= e.sampler.kind == SamplerSpec::Kind::WaterFill;
    }

    std::optional<PolicyTable> solved;
    const PolicyTable* table = external_policy;
    if (needs_table && !table) {
        if (!may_solve) throw MissingArtifactError("roster includes a table sampler but no policy file was given");
        solved.emplace(bisection_solve(dist, grid, m, cfg.solver, nullptr, cfg.space_max_states));
        table = &*solved;
    }

    std::optional<WaterFillPolicy> wf;
    PointResult result;
    if (needs_wf) {
        double th = cfg.waterfill_th;  // fixed threshold from the config, or searched
        if (th < 0.0) {
            const auto evaluator =
                make_waterfill_evaluator(dist, m, grid.max_wait_time(), cfg.seed,
                                         cfg.waterfill_eval_n, cfg.waterfill_eval_burn_in);
            th = golden_section_threshold(dist, m, evaluator, cfg.waterfill_search_hi,
                                          cfg.waterfill_tol)
                     .th;
        }
        wf = WaterFillPolicy{th, m, grid.max_wait_time()};
        result.wf_threshold = th;
    }
    if (table) result.beta_star = table->beta_star();

    const SimConfig base = cfg.sim_config();
    const std::string hash = cfg.hash_hex();
    for (const auto& entry : cfg.roster) {
        const Scheduler sched = entry.maf ? Scheduler::maf() : Scheduler::random();
        const Sampler sampler = detail::make_sampler(entry.sampler, dist, table, wf);
        CsvRow row;
        row.label = entry.label();
        if (cfg.two_point_family) row.p = p.value_or(cfg.two_point_p);
        row.n = cfg.sim_n;
        row.seed = cfg.seed;
        row.config_hash = hash;
        if (entry.sampler.kind == SamplerSpec::Kind::Table) row.beta_star = result.beta_star;
        if (entry.sampler.kind == SamplerSpec::Kind::WaterFill) row.wf_threshold = result.wf_threshold;
        if (cfg.replications >= 2) {
            row.est = estimate_with_ci(sched, sampler, dist, m, base, cfg.replications);
        } else {
            const SimResult r = run(sched, sampler, dist, m, base);
            row.est.tapa = r.tapa;
            row.est.taa = r.taa;
            row.est.replications = 1;
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

/// solve: run the bisection, write the policy file, print a summary.
inline int cmd_solve(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& out) {
    const ServiceDistribution dist = cfg.distribution();
    const WaitGrid grid = cfg.wait_grid();
    SolveStats stats;
    const PolicyTable policy = bisection_solve(dist, grid, cfg.m, cfg.solver, &stats, cfg.space_max_states);

    std::ofstream file(out_path);
    if (!file) throw MissingArtifactError("cannot open policy output path '" + out_path + "'");
    policy.save(file);
    file.close();

    long positive_waits = 0;
    bool threshold_ok = true;
    for (std::size_t i = 0; i < policy.space().size(); ++i) {
        if (policy.wait_at(i) > 0) ++positive_waits;
        if (policy.space().sum_age_time(i) >= policy.threshold_cutoff() && policy.wait_at(i) != 0)
            threshold_ok = false;
    }

    out << "policy_file " << out_path << "\n";
    out << "m " << cfg.m << "\n";
    out << "tick " << cfg.tick.str() << "\n";
    out << "state_space_size " << policy.space().size() << "\n";
    out << "beta_star " << format_g17(policy.beta_star()) << "\n";
    out << "threshold_cutoff " << format_g17(policy.threshold_cutoff()) << "\n";
    out << "zero_wait_taa " << format_g17(zero_wait_taa(dist, cfg.m)) << "\n";
    out << "bisect_iterations " << stats.bisect_iterations << "\n";
    out << "rvi_iterations " << stats.rvi_iterations << "\n";
    out << "bisection_convention lemma1\n";
    out << "states_with_positive_wait " << positive_waits << "\n";
    out << "threshold_property_verified " << (threshold_ok ? "true" : "false") << "\n";
    out << "config_hash " << cfg.hash_hex() << "\n";
    return exit_ok;
}

inline void write_trace_csv(std::ostream& out, const SimResult& res, int m) {
    out << "# aoisim-trace v1\n";
    out << "i,source,S,D,Z,Y,peak";
    for (int l = 1; l <= m; ++l) out << ",age" << l;
    out << "\n";
    for (const auto& rec : res.trace) {
        out << rec.delivery << "," << rec.source + 1 << "," << format_g17(rec.generated) << ","
            << format_g17(rec.delivered) << "," << format_g17(rec.wait) << ","
            << format_g17(rec.service) << "," << format_g17(rec.peak);
        for (double a : rec.sorted_ages) out << "," << format_g17(a);
        out << "\n";
    }
}

/// simulate: evaluate the configured roster on the configured instance.
/// Table samplers require a policy file solved for the same instance.
inline int cmd_simulate(const ExperimentConfig& cfg, const std::string& policy_path,
                        std::ostream& out, const std::string& trace_prefix = "") {
    bool needs_table = false;
    for (const auto& e : cfg.roster) needs_table |= e.sampler.kind == SamplerSpec::Kind::Table;

    std::optional<PolicyTable> policy;
    if (needs_table) {
        if (policy_path.empty())
            throw MissingArtifactError("roster includes a table sampler: pass --policy <file>");
        std::ifstream file(policy_path);
        if (!file) throw MissingArtifactError("policy file '" + policy_path + "' not found");
        policy.emplace(PolicyTable::load(file));
        if (!(policy->space().dist() == cfg.distribution()) || !(policy->space().grid() == cfg.wait_grid()) ||
            policy->space().sources() != cfg.m)
            throw ConfigError("policy file '" + policy_path + "' was solved for a different instance");
    }

    const PointResult point = evaluate_point(cfg, std::nullopt, policy ? &*policy : nullptr, false);
    out << csv_schema << "\n" << csv_columns << "\n";
    for (const auto& row : point.rows) out << row.line() << "\n";

    if (!trace_prefix.empty()) {
        const ServiceDistribution dist = cfg.distribution();
        std::optional<WaterFillPolicy> wf;
        if (point.wf_threshold) wf = WaterFillPolicy{*point.wf_threshold, cfg.m, cfg.wait_grid().max_wait_time()};
        for (const auto& entry : cfg.roster) {
            SimConfig one = cfg.sim_config();
            one.record_trace = true;
            const Sampler sampler = detail::make_sampler(entry.sampler, dist, policy ? &*policy : nullptr, wf);
            const SimResult res = run(entry.maf ? Scheduler::maf() : Scheduler::random(), sampler,
                                      dist, cfg.m, one);
            std::string label = entry.label();
            for (char& c : label)
                if (c == ':' || c == '/') c = '_';
            std::ofstream tf(trace_prefix + label + ".csv");
            if (!tf) throw MissingArtifactError("cannot open trace output '" + trace_prefix + label + ".csv'");
            write_trace_csv(tf, res, cfg.m);
        }
    }
    return exit_ok;
}

/// sweep: evaluate every roster entry at every swept p; rows are emitted in
/// sweep order regardless of worker scheduling.
inline int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, int workers = 1) {
    const std::vector<double> points = cfg.sweep.points();
    if (points.empty()) throw ConfigError("sweep: empty point set");
    if (!cfg.two_point_family) throw ConfigError("sweep: requires the two-point distribution family");

    std::vector<PointResult> results(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= points.size()) return;
            try {
                results[k] = evaluate_point(cfg, points[k], nullptr, true);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(points.size())));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    out << csv_schema << "\n" << csv_columns << "\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (errors[k]) {
            out << "# PARTIAL: sweep aborted at p=" << format_g17(points[k]) << "\n";
            std::rethrow_exception(errors[k]);
        }
        for (const auto& row : results[k].rows) out << row.line() << "\n";
    }
    return exit_ok;
}

/// verify: run the oracle-equivalence, coupling-dominance, monotonicity,
/// threshold and saturation batteries; one machine-readable line per battery.
inline int cmd_verify(const ExperimentConfig& cfg, std::ostream& out) {
    bool all_ok = true;
    auto report = [&](const std::string& name, bool ok, const std::string& metrics) {
        out << "battery=" << name << " status=" << (ok ? "pass" : "fail")
            << (metrics.empty() ? "" : " ") << metrics << "\n";
        all_ok &= ok;
    };

    // Oracle equivalence on a fixed tiny battery plus the configured instance
    // when it fits under the enumeration cap.
    {
        double max_lambda_gap = 0.0, max_value_gap = 0.0;
        int checked = 0;
        bool configured_included = false;
        auto check_instance = [&](const ServiceDistribution& d, const WaitGrid& g, int m) {
            StateSpace space(d, g, m, cfg.space_max_states);
            const double zw = zero_wait_taa(d, m);
            for (double beta : {0.0, 0.5 * zw, zw}) {
                const RviSolution sol = rvi_solve(space, beta, cfg.solver);
                const OracleResult oracle = exhaustive_oracle(space, beta, cfg.oracle_max_policies);
                max_lambda_gap = std::max(max_lambda_gap, std::abs(sol.lambda - oracle.optimal_cost));
                std::vector<std::size_t> actions(space.size());
                for (std::size_t s = 0; s < space.size(); ++s)
                    actions[s] = detail::grid_action_index(g, sol.greedy_wait[s]);
                const double greedy_cost = chain_average_cost(space, actions, beta);
                max_value_gap = std::max(max_value_gap, std::abs(greedy_cost - oracle.optimal_cost));
                ++checked;
            }
        };
        const Rational unit{1, 1};
        const ServiceDistribution tiny(unit, {{1, 0.5}, {2, 0.5}});
        const WaitGrid tiny_grid(unit, 1, 1);
        check_instance(tiny, tiny_grid, 1);
        check_instance(tiny, tiny_grid, 2);
        try {
            const ServiceDistribution d = cfg.distribution();
            const WaitGrid g = cfg.wait_grid();
            const StateSpace probe(d, g, cfg.m, cfg.space_max_states);
            double projected = 1.0;
            bool fits = true;
            for (std::size_t s = 0; s < probe.size() && fits; ++s) {
                projected *= static_cast<double>(g.size());
                fits = projected <= cfg.oracle_max_policies;
            }
            if (fits) {
                check_instance(d, g, cfg.m);
                configured_included = true;
            }
        } catch (const std::length_error&) {
        }
        report("oracle", max_lambda_gap <= 1e-6 && max_value_gap <= 1e-6,
               "instances=" + std::to_string(checked) + " configured=" +
                   (configured_included ? "included" : "skipped") +
                   " max_lambda_gap=" + format_g17(max_lambda_gap) +
                   " max_value_gap=" + format_g17(max_value_gap));
    }

    // Coupled MAF dominance over RAND with replayed service sequences.
    {
        const ServiceDistribution dist = cfg.distribution();
        const long n = std::min<long>(cfg.sim_n, 100000);
        long violations = 0, epochs = 0;
        for (int s = 0; s < cfg.verify_seeds; ++s) {
            violations += coupled_dominance_violations(dist, cfg.m, n, cfg.seed + s, Sampler::zero_wait());
            epochs += n;
        }
        report("coupling", violations == 0,
               "seeds=" + std::to_string(cfg.verify_seeds) + " epochs=" + std::to_string(epochs) +
                   " violations=" + std::to_string(violations));
    }

    // Solve the configured instance once for the remaining batteries.
    const ServiceDistribution dist = cfg.distribution();
    const WaitGrid grid = cfg.wait_grid();
    const PolicyTable policy = bisection_solve(dist, grid, cfg.m, cfg.solver, nullptr, cfg.space_max_states);
    const RviSolution at_opt = rvi_solve(policy.space(), policy.beta_star(), cfg.solver);

    // Monotone relative values under componentwise state ordering.
    {
        const StateSpace& space = policy.space();
        long violations = 0;
        double worst = 0.0;
        const double slack = 10.0 * cfg.solver.eps2;
        for (std::size_t i = 0; i < space.size(); ++i)
            for (std::size_t j = 0; j < space.size(); ++j) {
                if (i == j) continue;
                const auto& a = space.state(i).ages;
                const auto& b = space.state(j).ages;
                bool leq = true;
                for (std::size_t l = 0; l < a.size() && leq; ++l) leq = a[l] <= b[l];
                if (!leq) continue;
                const double excess = at_opt.h[i] - at_opt.h[j];
                if (excess > slack) {
                    ++violations;
                    worst = std::max(worst, excess);
                }
            }
        report("monotonicity", violations == 0,
               "states=" + std::to_string(space.size()) + " violations=" + std::to_string(violations) +
                   " worst_excess=" + format_g17(worst));
    }

    // Threshold property: zero wait at and above the cutoff, both as stored in
    // the table and as the unconstrained argmin under the converged h.
    {
        const StateSpace& space = policy.space();
        long stored = 0, unconstrained = 0, above = 0;
        for (std::size_t s = 0; s < space.size(); ++s) {
            if (space.sum_age_time(s) < policy.threshold_cutoff()) continue;
            ++above;
            if (policy.wait_at(s) != 0) ++stored;
            const double q0 = stage_cost(space.state(s), 0, policy.beta_star(), dist, cfg.m) +
                              expected_relative_value(space, s, 0, at_opt.h);
            for (std::size_t zi = 1; zi < grid.size(); ++zi) {
                const double q = stage_cost(space.state(s), grid.value(zi), policy.beta_star(), dist, cfg.m) +
                                 expected_relative_value(space, s, zi, at_opt.h);
                if (q < q0 - 1e-9) {
                    ++unconstrained;
                    break;
                }
            }
        }
        report("threshold", stored == 0 && unconstrained == 0,
               "states_above_cutoff=" + std::to_string(above) + " stored_violations=" +
                   std::to_string(stored) + " argmin_violations=" + std::to_string(unconstrained));
    }

    // Wait-bound saturation: doubling M must leave beta* and the restricted policy unchanged.
    {
        const WaitGrid doubled(grid.tick(), 2 * grid.max_wait(), grid.step() > 0 ? grid.step() : 1);
        const PolicyTable wide = bisection_solve(dist, doubled, cfg.m, cfg.solver, nullptr, cfg.space_max_states);
        const double drift = std::abs(wide.beta_star() - policy.beta_star());
        long mismatches = 0;
        for (std::size_t s = 0; s < policy.space().size(); ++s) {
            const Tick w = wide.wait_for(policy.space().state(s));
            if (w != policy.wait_at(s)) ++mismatches;
        }
        report("saturation", drift <= cfg.solver.eps1 && mismatches == 0,
               "beta_drift=" + format_g17(drift) + " policy_mismatches=" + std::to_string(mismatches) +
                   " states=" + std::to_string(policy.space().size()));
    }

    if (!all_ok) throw VerificationFailure("one or more verification batteries failed");
    return exit_ok;
}

}  // namespace aoi
