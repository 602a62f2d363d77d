// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "aoi/oracle.hpp"
#include "aoi/sim.hpp"
#include "aoi/solver.hpp"
#include "aoi/waterfill.hpp"

using namespace aoi;

namespace {

const Rational quarter{1, 4};
const std::vector<double> sweep_p = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

ServiceDistribution dist_at(double p) {
    return ServiceDistribution::two_point(quarter, Rational{0, 1}, Rational{3, 1}, p);
}

WaitGrid grid_with(Tick max_ticks) { return WaitGrid(quarter, max_ticks, 1); }  // step = 1/4

struct Solved {
    PolicyTable table;
    RviSolution at_opt;  // converged relative values at beta*
};

class SolveCache {
  public:
    const Solved& get(double p, Tick max_ticks) {
        char key[64];
        std::snprintf(key, sizeof key, "p=%.3f|M=%lld", p, static_cast<long long>(max_ticks));
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            const ServiceDistribution d = dist_at(p);
            PolicyTable table = bisection_solve(d, grid_with(max_ticks), 3);
            RviSolution sol = rvi_solve(table.space(), table.beta_star());
            it = cache_.emplace(key, Solved{std::move(table), std::move(sol)}).first;
        }
        return it->second;
    }

    const std::map<std::string, Solved>& all() const { return cache_; }

  private:
    std::map<std::string, Solved> cache_;
};

struct Outcome {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

SimConfig sim_cfg(long n, long burn, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_deliveries = n;
    cfg.burn_in = burn;
    cfg.seed = seed;
    return cfg;
}

// 1. Zero-wait TaPA line: simulated TaPA under MAF+zero-wait equals 12(1-p)
//    within 2% at 1e6 deliveries for every swept p.
Outcome criterion1() {
    double worst = 0.0;
    for (std::size_t i = 0; i < sweep_p.size(); ++i) {
        const double p = sweep_p[i];
        const SimResult res =
            run(Scheduler::maf(), Sampler::zero_wait(), dist_at(p), 3, sim_cfg(1000000, 1000, 1000 + i));
        const double want = 12.0 * (1.0 - p);
        worst = std::max(worst, std::abs(res.tapa - want) / want);
    }
    return {1, "zero-wait TaPA equals 12(1-p) within 2% across the p sweep", worst <= 0.02,
            fmt("max relative error %.4f%%", 100 * worst)};
}

// 2. Constant-wait TaPA strictly exceeds zero-wait TaPA at every p, outside
//    overlapping 95% CIs.
Outcome criterion2() {
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sweep_p.size(); ++i) {
        const double p = sweep_p[i];
        const ServiceDistribution d = dist_at(p);
        const SimConfig cfg = sim_cfg(200000, 1000, 2000 + 10 * i);
        const CiEstimate zero = estimate_with_ci(Scheduler::maf(), Sampler::zero_wait(), d, 3, cfg, 5);
        const CiEstimate cons = estimate_with_ci(
            Scheduler::maf(), Sampler::constant_wait(0.3 * d.mean()), d, 3, cfg, 5);
        min_gap = std::min(min_gap, (cons.tapa - cons.tapa_hw) - (zero.tapa + zero.tapa_hw));
    }
    return {2, "constant-wait TaPA exceeds zero-wait TaPA outside 95% CIs at every p", min_gap > 0.0,
            fmt("min CI gap %.4f", min_gap)};
}

// 3. Coupled MAF dominance over RAND at 100% of delivery epochs,
//    10 seeds x 1e5 deliveries.
Outcome criterion3() {
    long violations = 0;
    const ServiceDistribution d = dist_at(0.5);
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        violations += coupled_dominance_violations(d, 3, 100000, seed, Sampler::zero_wait());
    return {3, "coupled sorted ages: MAF <= RAND componentwise at every epoch (10 x 1e5)",
            violations == 0, fmt("violations %ld of 3000000 comparisons", violations)};
}

// 4. Solver-simulator consistency at p=0.5, M=3, delta=1/4: simulated TaA of
//    the solved policy within 2% of beta*.
Outcome criterion4(SolveCache& cache) {
    const auto t0 = std::chrono::steady_clock::now();
    const Solved& sol = cache.get(0.5, 12);
    const double solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const SimResult res = run(Scheduler::maf(), Sampler::table(sol.table), dist_at(0.5), 3,
                              sim_cfg(1000000, 1000, 44));
    const double rel = std::abs(res.taa - sol.table.beta_star()) / sol.table.beta_star();
    return {4, "simulated TaA of the solved threshold policy within 2% of beta*",
            rel <= 0.02 && sol.table.space().size() <= 3500,
            fmt("beta*=%.6f simulated=%.6f rel_err=%.4f%% states=%zu solve=%.2fs",
                sol.table.beta_star(), res.taa, 100 * rel, sol.table.space().size(), solve_seconds)};
}

// 5. TaA ordering at every p: table <= MAF zero-wait <= RAND zero-wait within
//    CI, and water-fill within 1% of the table policy.
Outcome criterion5(SolveCache& cache) {
    bool ok = true;
    std::string worst_note = "all orderings hold";
    double worst_wf = 0.0;
    for (std::size_t i = 0; i < sweep_p.size(); ++i) {
        const double p = sweep_p[i];
        const ServiceDistribution d = dist_at(p);
        const Solved& sol = cache.get(p, 12);
        const auto evaluator = make_waterfill_evaluator(d, 3, 3.0, 7000 + i, 200000, 1000);
        const GoldenResult wf = golden_section_threshold(d, 3, evaluator, -1.0, 1e-3);

        const SimConfig cfg = sim_cfg(1000000, 1000, 50000 + 1000 * i);
        const CiEstimate table =
            estimate_with_ci(Scheduler::maf(), Sampler::table(sol.table), d, 3, cfg, 5);
        const CiEstimate mafzero = estimate_with_ci(Scheduler::maf(), Sampler::zero_wait(), d, 3, cfg, 5);
        const CiEstimate randzero =
            estimate_with_ci(Scheduler::random(), Sampler::zero_wait(), d, 3, cfg, 5);
        const CiEstimate wfest = estimate_with_ci(
            Scheduler::maf(), Sampler::water_fill({wf.th, 3, 3.0}), d, 3, cfg, 5);

        const bool order1 = table.taa <= mafzero.taa + table.taa_hw + mafzero.taa_hw;
        const bool order2 = mafzero.taa <= randzero.taa + mafzero.taa_hw + randzero.taa_hw;
        const double wf_rel = std::abs(wfest.taa - table.taa) / table.taa;
        worst_wf = std::max(worst_wf, wf_rel);
        if (!(order1 && order2 && wf_rel <= 0.01)) {
            ok = false;
            worst_note = fmt("violated at p=%.1f: table=%.4f mafzero=%.4f randzero=%.4f wf=%.4f",
                             p, table.taa, mafzero.taa, randzero.taa, wfest.taa);
        }
    }
    return {5, "TaA ordering table <= MAF-zero <= RAND-zero within CI; water-fill within 1% of table",
            ok, fmt("%s; max waterfill gap %.3f%%", worst_note.c_str(), 100 * worst_wf)};
}

// 6. Oracle equivalence on the fixed tiny battery.
Outcome criterion6() {
    double max_lambda_gap = 0.0, max_value_gap = 0.0;
    const Rational unit{1, 1};
    const ServiceDistribution d12(unit, {{1, 0.5}, {2, 0.5}});
    const WaitGrid grid(unit, 1, 1);
    for (int m : {1, 2}) {
        const StateSpace space(d12, grid, m);
        const double zw = zero_wait_taa(d12, m);
        for (double beta : {0.0, 0.5 * zw, zw}) {
            const RviSolution sol = rvi_solve(space, beta);
            const OracleResult oracle = exhaustive_oracle(space, beta, 1e6);
            max_lambda_gap = std::max(max_lambda_gap, std::abs(sol.lambda - oracle.optimal_cost));
            std::vector<std::size_t> actions(space.size());
            for (std::size_t s = 0; s < space.size(); ++s)
                actions[s] = static_cast<std::size_t>(sol.greedy_wait[s] / grid.step());
            max_value_gap = std::max(
                max_value_gap, std::abs(chain_average_cost(space, actions, beta) - oracle.optimal_cost));
        }
    }
    return {6, "RVI matches the exhaustive oracle (lambda and greedy policy value) within 1e-6",
            max_lambda_gap <= 1e-6 && max_value_gap <= 1e-6,
            fmt("max lambda gap %.2e, max greedy value gap %.2e", max_lambda_gap, max_value_gap)};
}

// 7. Threshold property on every policy solved anywhere in this battery.
Outcome criterion7(const SolveCache& cache, const PolicyTable& degenerate) {
    long violations = 0, tables = 0, states_above = 0;
    auto check = [&](const PolicyTable& t) {
        ++tables;
        for (std::size_t s = 0; s < t.space().size(); ++s)
            if (t.space().sum_age_time(s) >= t.threshold_cutoff()) {
                ++states_above;
                if (t.wait_at(s) != 0) ++violations;
            }
    };
    for (const auto& [key, sol] : cache.all()) check(sol.table);
    check(degenerate);
    return {7, "threshold property exact on every solved policy (wait 0 at A_s >= beta* - m E[Y])",
            violations == 0,
            fmt("%ld tables, %ld states above cutoff, %ld violations", tables, states_above, violations)};
}

// 8. Monotone relative values under componentwise ordering, within 10 eps2.
Outcome criterion8(const SolveCache& cache) {
    const double slack = 10.0 * SolverConfig{}.eps2;
    long violations = 0, pairs = 0;
    for (const auto& [key, sol] : cache.all()) {
        const StateSpace& space = sol.table.space();
        for (std::size_t i = 0; i < space.size(); ++i)
            for (std::size_t j = 0; j < space.size(); ++j) {
                const auto& a = space.state(i).ages;
                const auto& b = space.state(j).ages;
                bool leq = true;
                for (std::size_t l = 0; l < a.size() && leq; ++l) leq = a[l] <= b[l];
                if (!leq) continue;
                ++pairs;
                if (sol.at_opt.h[i] > sol.at_opt.h[j] + slack) ++violations;
            }
    }
    return {8, "relative values monotone under componentwise state ordering (10 eps2 slack)",
            violations == 0, fmt("%ld ordered pairs checked, %ld violations", pairs, violations)};
}

// 9. Saturation: doubling M leaves beta* within eps1=1e-4 and the restricted
//    policy unchanged, for p in {0.3, 0.5, 0.7}.
Outcome criterion9(SolveCache& cache) {
    double max_drift = 0.0;
    long mismatches = 0;
    for (double p : {0.3, 0.5, 0.7}) {
        const Solved& base = cache.get(p, 12);
        const Solved& wide = cache.get(p, 24);
        max_drift = std::max(max_drift, std::abs(base.table.beta_star() - wide.table.beta_star()));
        for (std::size_t s = 0; s < base.table.space().size(); ++s)
            if (wide.table.wait_for(base.table.space().state(s)) != base.table.wait_at(s))
                ++mismatches;
    }
    return {9, "doubling the wait bound M leaves beta* (within 1e-4) and the policy unchanged",
            max_drift <= 1e-4 && mismatches == 0,
            fmt("max beta* drift %.2e, policy mismatches %ld", max_drift, mismatches)};
}

// 10. Degenerate closed form: m=1, Y=2 deterministic, Z={0}.
Outcome criterion10(PolicyTable& out_policy) {
    const double c = 2.0;
    const ServiceDistribution det(quarter, {{8, 1.0}});  // 8 ticks = 2.0
    const WaitGrid grid(quarter, 0, 1);
    PolicyTable policy = bisection_solve(det, grid, 1);
    const double beta_err = std::abs(policy.beta_star() - 1.5 * c);
    const SimResult res =
        run(Scheduler::maf(), Sampler::table(policy), det, 1, sim_cfg(100000, 100, 5));
    const bool exact = std::abs(res.taa - 1.5 * c) <= 1e-12 && std::abs(res.tapa - 2.0 * c) <= 1e-12;
    const bool pass = beta_err <= 1e-4 && exact;
    Outcome o{10, "degenerate instance: beta* = 1.5c within eps1; simulated TaA/TaPA exact", pass,
              fmt("beta*=%.8f (err %.2e), TaA=%.15g, TaPA=%.15g", policy.beta_star(), beta_err,
                  res.taa, res.tapa)};
    out_policy = std::move(policy);
    return o;
}

}  // namespace

int main() {
    SolveCache cache;
    std::vector<Outcome> outcomes;
    const auto started = std::chrono::steady_clock::now();

    outcomes.push_back(criterion1());
    outcomes.push_back(criterion2());
    outcomes.push_back(criterion3());
    outcomes.push_back(criterion4(cache));
    outcomes.push_back(criterion5(cache));
    outcomes.push_back(criterion6());
    outcomes.push_back(criterion9(cache));  // populate the wide-M tables first

    const ServiceDistribution det(quarter, {{8, 1.0}});
    PolicyTable degenerate(StateSpace(det, WaitGrid(quarter, 0, 1), 1), {0}, zero_wait_taa(det, 1));
    outcomes.push_back(criterion10(degenerate));

    // the battery-wide structural criteria run over every table solved above
    outcomes.push_back(criterion7(cache, degenerate));
    outcomes.push_back(criterion8(cache));

    std::sort(outcomes.begin(), outcomes.end(),
              [](const Outcome& a, const Outcome& b) { return a.id < b.id; });

    bool all_pass = true;
    for (const Outcome& o : outcomes) {
        std::printf("[%2d] %s  %s — %s\n", o.id, o.pass ? "PASS" : "FAIL", o.name.c_str(),
                    o.detail.c_str());
        all_pass &= o.pass;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("%s (%d/%d criteria, %.1fs)\n", all_pass ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(),
                                               [](const Outcome& o) { return o.pass; })),
                static_cast<int>(outcomes.size()), elapsed);
    return all_pass ? 0 : 1;
}
