#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/state_space.hpp"
#include "aoi/text.hpp"

namespace aoi {

class SolverError : public std::runtime_error {
  public:
    SolverError(const std::string& what, double residual = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

  private:
    double residual_;
};

struct SolverConfig {
    double eps1 = 1e-4;          // bisection bracket tolerance, time units
    double eps2 = 1e-9;          // RVI sup-norm tolerance, cost units
    long max_rvi_iters = 100000;
    int max_bisect_iters = 60;
    double tau = 0.0;            // aperiodicity self-loop probability; auto 0.5 for degenerate Y

    void validate() const {
        if (!(eps1 > 0.0) || !(eps2 > 0.0))
            throw std::invalid_argument("SolverConfig: tolerances must be > 0");
        if (tau < 0.0 || tau >= 1.0) throw std::invalid_argument("SolverConfig: tau must be in [0,1)");
        if (max_rvi_iters < 1 || max_bisect_iters < 1)
            throw std::invalid_argument("SolverConfig: iteration caps must be >= 1");
    }

    double effective_tau(const ServiceDistribution& dist) const {
        return (tau == 0.0 && dist.degenerate()) ? 0.5 : tau;
    }
};

/// Expected cost of one stage: C(s,z) = (A_s - beta)(z + E[Y]) +
/// (m/2)(z^2 + 2 z E[Y] + E[Y^2]), with ages and waits in time units.
inline double stage_cost(double sum_age_time, double z_time, double beta,
                         const ServiceDistribution& dist, int m) {
    const double ey = dist.mean();
    const double ey2 = dist.second_moment();
    return (sum_age_time - beta) * (z_time + ey) +
           0.5 * m * (z_time * z_time + 2.0 * z_time * ey + ey2);
}

inline double stage_cost(const SortedAgeState& s, Tick z, double beta,
                         const ServiceDistribution& dist, int m) {
    const double td = dist.tick().to_double();
    return stage_cost(static_cast<double>(s.sum()) * td, static_cast<double>(z) * td, beta, dist, m);
}

/// E[h(s') | s, z] = sum_y P(Y=y) h(evolve_state(s, z, y)), resolved through
/// the state-space successor table.
inline double expected_relative_value(const StateSpace& space, std::size_t s, std::size_t z_index,
                                      std::span<const double> h) {
    double ev = 0.0;
    for (std::size_t yi = 0; yi < space.dist().support_size(); ++yi)
        ev += space.dist().prob(yi) * h[space.successor(s, z_index, yi)];
    return ev;
}

struct RviSolution {
    double lambda = 0.0;            // optimal average cost per stage at this beta, J(o)
    std::vector<double> h;          // relative values; h[reference] == 0
    std::vector<Tick> greedy_wait;  // per-state argmin wait (ticks), smallest-z tie-break
    long iterations = 0;
    double residual = 0.0;          // final sup-norm change of h
};

/// Relative value iteration for the beta-parameterized average-cost problem.
///
/// Iterates Q(s,z) = C(s,z) + E[h(s')], J(s) = min_z Q(s,z), h'(s) = J(s) - J(o)
/// from J_0 = 0 until the sup-norm change of h falls below eps2. States with
/// A_s >= beta - m E[Y] skip the minimization and use z = 0 (threshold
/// property). With tau > 0 the expectation is blended with a self-loop,
/// Q = C + tau h(s) + (1-tau) E[h(s')], which leaves lambda and the greedy
/// policy unchanged while making the iteration aperiodic.
inline RviSolution rvi_solve(const StateSpace& space, double beta, const SolverConfig& cfg = {},
                             std::size_t reference = StateSpace::npos) {
    cfg.validate();
    if (beta < 0.0) throw std::invalid_argument("rvi_solve: beta must be >= 0");
    const std::size_t n = space.size();
    const std::size_t nz = space.grid().size();
    const std::size_t ny = space.dist().support_size();
    const std::size_t o = (reference == StateSpace::npos) ? space.reference() : reference;
    if (o >= n) throw std::invalid_argument("rvi_solve: reference state out of range");

    const ServiceDistribution& dist = space.dist();
    const int m = space.sources();
    const double ey = dist.mean();
    const double tau = cfg.effective_tau(dist);
    const double move = 1.0 - tau;
    const double td = dist.tick().to_double();

    // Per-action pieces of the stage cost and per-state age sums.
    std::vector<double> zw(nz), zk(nz);
    for (std::size_t zi = 0; zi < nz; ++zi) {
        const double z = static_cast<double>(space.grid().value(zi)) * td;
        zw[zi] = z + ey;
        zk[zi] = 0.5 * m * (z * z + 2.0 * z * ey + dist.second_moment());
    }
    std::vector<double> age(n);
    std::vector<char> skip(n);
    const double cutoff = beta - m * ey;
    for (std::size_t s = 0; s < n; ++s) {
        age[s] = space.sum_age_time(s);
        skip[s] = age[s] >= cutoff;
    }
    const std::span<const double> probs = dist.probs();

    std::vector<double> h(n, 0.0), J(n, 0.0);
    double residual = std::numeric_limits<double>::infinity();
    long iter = 0;

    auto action_value = [&](std::size_t s, std::size_t zi) {
        double ev = 0.0;
        for (std::size_t yi = 0; yi < ny; ++yi) ev += probs[yi] * h[space.successor(s, zi, yi)];
        return (age[s] - beta) * zw[zi] + zk[zi] + tau * h[s] + move * ev;
    };

    for (; iter < cfg.max_rvi_iters; ++iter) {
        for (std::size_t s = 0; s < n; ++s) {
            if (skip[s]) {
                J[s] = action_value(s, 0);
                continue;
            }
            double best = action_value(s, 0);
            for (std::size_t zi = 1; zi < nz; ++zi) best = std::min(best, action_value(s, zi));
            J[s] = best;
        }
        const double jo = J[o];
        residual = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double next = J[s] - jo;
            residual = std::max(residual, std::abs(next - h[s]));
            h[s] = next;
        }
        if (!std::isfinite(residual)) throw SolverError("rvi_solve: diverged", residual);
        if (residual <= cfg.eps2) {
            ++iter;
            break;
        }
    }
    if (residual > cfg.eps2)
        throw SolverError("rvi_solve: no convergence within " + std::to_string(cfg.max_rvi_iters) +
                              " iterations (residual " + format_g17(residual) + ")",
                          residual);

    RviSolution sol;
    sol.lambda = J[o];
    sol.iterations = iter;
    sol.residual = residual;
    sol.greedy_wait.assign(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        if (skip[s]) continue;
        std::size_t best = 0;
        double bestv = action_value(s, 0);
        for (std::size_t zi = 1; zi < nz; ++zi) {
            const double v = action_value(s, zi);
            if (v < bestv) {
                bestv = v;
                best = zi;
            }
        }
        sol.greedy_wait[s] = space.grid().value(best);
    }
    sol.h = std::move(h);
    return sol;
}

/// TaA of the zero-wait sampler under the max-age-first scheduler:
/// m(m+1)/2 E[Y] + m E[Y^2] / (2 E[Y]).
inline double zero_wait_taa(const ServiceDistribution& dist, int m) {
    return 0.5 * m * (m + 1) * dist.mean() + m * dist.second_moment() / (2.0 * dist.mean());
}

/// TaPA of the zero-wait sampler: (m+1) E[Y] (each peak spans m+1 service times).
inline double zero_wait_tapa(const ServiceDistribution& dist, int m) {
    return (m + 1) * dist.mean();
}

struct SolveStats {
    int bisect_iterations = 0;
    long rvi_iterations = 0;  // summed over all inner solves
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    double lambda_at_upper = 0.0;
};

/// Solved sampler: per-state optimal waiting times plus the optimal TaA.
class PolicyTable {
  public:
    PolicyTable(StateSpace space, std::vector<Tick> wait, double beta_star)
        : space_(std::move(space)),
          wait_(std::move(wait)),
          beta_star_(beta_star),
          cutoff_(beta_star - space_.sources() * space_.dist().mean()) {
        validate();
    }

    const StateSpace& space() const { return space_; }
    std::span<const Tick> waits() const { return wait_; }
    double beta_star() const { return beta_star_; }
    double threshold_cutoff() const { return cutoff_; }

    Tick wait_at(std::size_t i) const { return wait_[i]; }

    /// Wait (ticks) for a state, or npos_tick when the state is not a member.
    static constexpr Tick npos_tick = -1;
    Tick wait_for(const SortedAgeState& s) const {
        const std::size_t i = space_.index_of(s);
        return i == StateSpace::npos ? npos_tick : wait_[i];
    }

    /// Versioned plain-text serialization; round-trips bit-exactly.
    void save(std::ostream& out) const {
        const auto& d = space_.dist();
        out << "aoisim-policy v1\n";
        out << "m " << space_.sources() << "\n";
        out << "tick " << d.tick().str() << "\n";
        out << "beta_star " << format_g17(beta_star_) << "\n";
        out << "cutoff " << format_g17(cutoff_) << "\n";
        out << "dist";
        for (std::size_t k = 0; k < d.support_size(); ++k)
            out << " " << d.value(k) << ":" << format_g17(d.prob(k));
        out << "\n";
        out << "grid " << space_.grid().max_wait() << " " << space_.grid().step() << "\n";
        out << "states " << space_.size() << "\n";
        for (std::size_t i = 0; i < space_.size(); ++i) {
            const auto& ages = space_.state(i).ages;
            for (std::size_t l = 0; l < ages.size(); ++l) out << (l ? " " : "") << ages[l];
            out << "\t" << wait_[i] << "\n";
        }
    }

    static PolicyTable load(std::istream& in) {
        auto need = [&](const std::string& key) {
            std::string line;
            if (!std::getline(in, line)) throw std::invalid_argument("policy file: truncated");
            const auto sp = line.find(' ');
            if (line.substr(0, sp) != key)
                throw std::invalid_argument("policy file: expected '" + key + "' line");
            return std::string(trim_view(sp == std::string::npos ? "" : line.substr(sp + 1)));
        };
        std::string header;
        if (!std::getline(in, header) || trim_view(header) != "aoisim-policy v1")
            throw std::invalid_argument("policy file: bad header (want 'aoisim-policy v1')");
        const int m = static_cast<int>(parse_int(need("m"), "policy m"));
        const Rational tick = Rational::parse(need("tick"));
        const double beta = parse_double(need("beta_star"), "policy beta_star");
        const double cutoff = parse_double(need("cutoff"), "policy cutoff");
        std::vector<std::pair<Tick, double>> atoms;
        for (const auto& item : split(need("dist"), ' ')) {
            if (item.empty()) continue;
            const auto parts = split(item, ':');
            if (parts.size() != 2) throw std::invalid_argument("policy file: bad dist entry");
            atoms.emplace_back(parse_int(parts[0], "dist value"), parse_double(parts[1], "dist prob"));
        }
        const auto grid_parts = split(need("grid"), ' ');
        if (grid_parts.size() != 2) throw std::invalid_argument("policy file: bad grid line");
        const std::size_t count = static_cast<std::size_t>(parse_int(need("states"), "states"));

        ServiceDistribution dist(tick, std::move(atoms));
        WaitGrid grid(tick, parse_int(grid_parts[0], "grid max"), parse_int(grid_parts[1], "grid step"));
        StateSpace space(std::move(dist), std::move(grid), m);
        if (space.size() != count)
            throw std::invalid_argument("policy file: state count does not match the declared problem");

        std::vector<Tick> wait(count, 0);
        for (std::size_t i = 0; i < count; ++i) {
            std::string line;
            if (!std::getline(in, line)) throw std::invalid_argument("policy file: truncated states");
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw std::invalid_argument("policy file: bad state line");
            std::vector<Tick> ages;
            for (const auto& tok : split(line.substr(0, tab), ' '))
                if (!tok.empty()) ages.push_back(parse_int(tok, "state age"));
            if (!(SortedAgeState(std::move(ages)) == space.state(i)))
                throw std::invalid_argument("policy file: state " + std::to_string(i) +
                                            " does not match the canonical enumeration");
            wait[i] = parse_int(line.substr(tab + 1), "state wait");
        }

        PolicyTable table(std::move(space), std::move(wait), beta);
        if (std::abs(table.threshold_cutoff() - cutoff) > 1e-9)
            throw std::invalid_argument("policy file: cutoff inconsistent with beta_star");
        table.cutoff_ = cutoff;  // keep the stored bits for exact round-trips
        return table;
    }

  private:
    void validate() const {
        if (wait_.size() != space_.size())
            throw std::invalid_argument("PolicyTable: wait vector size mismatch");
        const Tick max_wait = space_.grid().max_wait();
        for (std::size_t i = 0; i < wait_.size(); ++i) {
            if (wait_[i] < 0 || wait_[i] > max_wait)
                throw std::logic_error("PolicyTable: wait outside the grid");
            if (space_.sum_age_time(i) >= cutoff_ && wait_[i] != 0)
                throw std::logic_error("PolicyTable: threshold property violated");
        }
    }

    StateSpace space_;
    std::vector<Tick> wait_;
    double beta_star_;
    double cutoff_;
};

/// Outer bisection over the candidate TaA beta (fractional-program parameter).
///
/// Brackets beta in [0, TaA of the zero-wait sampler] and narrows by the sign
/// of the inner RVI's optimal average cost: lambda = p(beta) > 0 means the
/// optimum lies above beta (l = beta), lambda < 0 means below (u = beta).
/// After the bracket closes to eps1, one final RVI at beta* = (l+u)/2 yields
/// the greedy policy that is returned.
inline PolicyTable bisection_solve(const ServiceDistribution& dist, const WaitGrid& grid, int m,
                                   const SolverConfig& cfg = {}, SolveStats* stats = nullptr,
                                   std::size_t max_states = 2'000'000) {
    cfg.validate();
    StateSpace space(dist, grid, m, max_states);

    double lo = 0.0;
    double hi = zero_wait_taa(dist, m);

    // The upper bound must satisfy p(hi) <= 0; anything clearly positive means
    // the closed-form initializer is broken for this instance.
    const RviSolution at_hi = rvi_solve(space, hi, cfg);
    long rvi_total = at_hi.iterations;
    if (at_hi.lambda > std::max(100.0 * cfg.eps2, 1e-9))
        throw SolverError("bisection_solve: zero-wait TaA is not an upper bound (p(u) = " +
                              format_g17(at_hi.lambda) + ")",
                          at_hi.lambda);

    int iters = 0;
    while (hi - lo > cfg.eps1) {
        if (iters >= cfg.max_bisect_iters)
            throw SolverError("bisection_solve: bracket did not close within " +
                                  std::to_string(cfg.max_bisect_iters) + " iterations",
                              hi - lo);
        const double beta = 0.5 * (lo + hi);
        const RviSolution sol = rvi_solve(space, beta, cfg);
        rvi_total += sol.iterations;
        if (sol.lambda > 0.0)
            lo = beta;
        else
            hi = beta;
        ++iters;
    }

    const double beta_star = 0.5 * (lo + hi);
    const RviSolution final_sol = rvi_solve(space, beta_star, cfg);
    rvi_total += final_sol.iterations;

    if (stats) {
        stats->bisect_iterations = iters;
        stats->rvi_iterations = rvi_total;
        stats->bracket_lo = lo;
        stats->bracket_hi = hi;
        stats->lambda_at_upper = at_hi.lambda;
    }
    return PolicyTable(std::move(space), final_sol.greedy_wait, beta_star);
}

}  // namespace aoi
