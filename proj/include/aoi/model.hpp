#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aoi/rational.hpp"

namespace aoi {

/// Integer count of the global tick size. All distribution support values and
/// wait-grid values live on this lattice, so sums of ages, waits and service
/// times never round.
using Tick = std::int64_t;

/// Finite-support distribution of the transmission (service) time Y.
/// Support values are stored in ticks; moments are kept in time units.
class ServiceDistribution {
  public:
    ServiceDistribution(Rational tick_size, std::vector<std::pair<Tick, double>> atoms)
        : tick_(tick_size) {
        if (atoms.empty()) throw std::invalid_argument("ServiceDistribution: empty support");
        std::sort(atoms.begin(), atoms.end());
        double total = 0.0;
        const double td = tick_.to_double();
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            auto [v, p] = atoms[k];
            if (v < 0) throw std::invalid_argument("ServiceDistribution: negative support value");
            if (k > 0 && v == atoms[k - 1].first)
                throw std::invalid_argument("ServiceDistribution: duplicate support value");
            if (!(p > 0.0) || p > 1.0)
                throw std::invalid_argument("ServiceDistribution: probabilities must lie in (0,1]");
            values_.push_back(v);
            probs_.push_back(p);
            total += p;
            const double y = static_cast<double>(v) * td;
            mean_ += p * y;
            second_ += p * y * y;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("ServiceDistribution: probabilities must sum to 1 (within 1e-12)");
        if (!(mean_ > 0.0)) throw std::invalid_argument("ServiceDistribution: requires E[Y] > 0");
    }

    /// Builds from time-valued atoms, snapping each value exactly onto the tick lattice.
    static ServiceDistribution from_times(const Rational& tick_size,
                                          const std::vector<std::pair<Rational, double>>& atoms) {
        std::vector<std::pair<Tick, double>> t;
        t.reserve(atoms.size());
        for (const auto& [v, p] : atoms) {
            auto ticks = exact_tick_count(v, tick_size);
            if (!ticks)
                throw std::invalid_argument("ServiceDistribution: support value " + v.str() +
                                            " is not a multiple of tick " + tick_size.str());
            t.emplace_back(*ticks, p);
        }
        return ServiceDistribution(tick_size, std::move(t));
    }

    /// The two-point family used throughout the experiments: Y = lo with
    /// probability p, Y = hi with probability 1-p. Zero-probability atoms are dropped.
    static ServiceDistribution two_point(const Rational& tick_size, const Rational& lo,
                                         const Rational& hi, double p_lo) {
        if (p_lo < 0.0 || p_lo > 1.0) throw std::invalid_argument("two_point: p outside [0,1]");
        std::vector<std::pair<Rational, double>> atoms;
        if (p_lo > 0.0) atoms.emplace_back(lo, p_lo);
        if (p_lo < 1.0) atoms.emplace_back(hi, 1.0 - p_lo);
        return from_times(tick_size, atoms);
    }

    const Rational& tick() const { return tick_; }
    std::size_t support_size() const { return values_.size(); }
    bool degenerate() const { return values_.size() == 1; }
    Tick value(std::size_t k) const { return values_[k]; }
    double prob(std::size_t k) const { return probs_[k]; }
    std::span<const Tick> values() const { return values_; }
    std::span<const double> probs() const { return probs_; }

    double mean() const { return mean_; }            // E[Y], time units
    double second_moment() const { return second_; } // E[Y^2], time units^2
    double time_of(Tick t) const { return static_cast<double>(t) * tick_.to_double(); }

    bool operator==(const ServiceDistribution& o) const {
        return tick_ == o.tick_ && values_ == o.values_ && probs_ == o.probs_;
    }

  private:
    Rational tick_;
    std::vector<Tick> values_;
    std::vector<double> probs_;
    double mean_ = 0.0;
    double second_ = 0.0;
};

/// (E[Y], E[Y^2]) in time units.
inline std::pair<double, double> moments(const ServiceDistribution& dist) {
    return {dist.mean(), dist.second_moment()};
}

/// Uniform waiting-time grid Z = {0, step, 2*step, ..., max_wait}, in ticks.
class WaitGrid {
  public:
    WaitGrid(Rational tick_size, Tick max_wait, Tick step) : tick_(tick_size) {
        if (max_wait < 0) throw std::invalid_argument("WaitGrid: max wait must be >= 0");
        if (max_wait > 0) {
            if (step <= 0) throw std::invalid_argument("WaitGrid: step must be > 0");
            if (max_wait % step != 0)
                throw std::invalid_argument("WaitGrid: step must divide max wait exactly");
        }
        for (Tick z = 0; z <= max_wait; z += (step > 0 ? step : 1)) {
            values_.push_back(z);
            if (max_wait == 0) break;
        }
        step_ = step;
        max_ = max_wait;
    }

    static WaitGrid from_times(const Rational& tick_size, const Rational& max_wait,
                               const Rational& step) {
        auto m = exact_tick_count(max_wait, tick_size);
        auto d = exact_tick_count(step, tick_size);
        if (!m || !d)
            throw std::invalid_argument("WaitGrid: bounds must be multiples of tick " + tick_size.str());
        return WaitGrid(tick_size, *m, *d);
    }

    const Rational& tick() const { return tick_; }
    Tick max_wait() const { return max_; }
    Tick step() const { return step_; }
    std::size_t size() const { return values_.size(); }
    Tick value(std::size_t i) const { return values_[i]; }
    std::span<const Tick> values() const { return values_; }
    double max_wait_time() const { return static_cast<double>(max_) * tick_.to_double(); }

    bool operator==(const WaitGrid& o) const {
        return tick_ == o.tick_ && max_ == o.max_ && step_ == o.step_;
    }

  private:
    Rational tick_;
    std::vector<Tick> values_;
    Tick max_ = 0;
    Tick step_ = 0;
};

/// SMDP state at a delivery epoch: the source ages sorted in descending
/// order, a_[1] >= ... >= a_[m] >= 0, in ticks.
struct SortedAgeState {
    std::vector<Tick> ages;

    SortedAgeState() = default;
    explicit SortedAgeState(std::vector<Tick> sorted_desc) : ages(std::move(sorted_desc)) {}

    /// Sorts the given ages descending; validates non-negativity.
    static SortedAgeState of(std::vector<Tick> unsorted) {
        for (Tick a : unsorted)
            if (a < 0) throw std::invalid_argument("SortedAgeState: negative age");
        std::sort(unsorted.begin(), unsorted.end(), std::greater<>());
        return SortedAgeState(std::move(unsorted));
    }

    int sources() const { return static_cast<int>(ages.size()); }

    /// A_s, the exact sum of the age components (ticks).
    Tick sum() const {
        Tick s = 0;
        for (Tick a : ages) s += a;
        return s;
    }

    bool operator==(const SortedAgeState&) const = default;
    auto operator<=>(const SortedAgeState& o) const { return ages <=> o.ages; }
};

/// Per-source ages indexed by source identity (unsorted), for contexts where
/// identity matters. The simulator keeps its own continuous-time variant.
struct PerSourceAges {
    std::vector<Tick> ages;

    PerSourceAges() = default;
    explicit PerSourceAges(std::vector<Tick> a) : ages(std::move(a)) {
        for (Tick v : ages)
            if (v < 0) throw std::invalid_argument("PerSourceAges: negative age");
    }
};

/// State evolution at a delivery: the served (max-age) source drops to age y,
/// every other source ages by z + y. Output is descending by construction.
inline SortedAgeState evolve_state(const SortedAgeState& s, Tick z, Tick y) {
    const std::size_t m = s.ages.size();
    std::vector<Tick> next(m);
    for (std::size_t l = 0; l + 1 < m; ++l) next[l] = s.ages[l + 1] + z + y;
    next[m - 1] = y;
    return SortedAgeState(std::move(next));
}

/// Index of a maximum-age source; ties broken by lowest index.
template <typename Ages>
std::size_t maf_pick(const Ages& ages) {
    if (ages.empty()) throw std::invalid_argument("maf_pick: no sources");
    std::size_t best = 0;
    for (std::size_t l = 1; l < ages.size(); ++l)
        if (ages[l] > ages[best]) best = l;
    return best;
}

inline std::size_t maf_pick(const PerSourceAges& ages) { return maf_pick(ages.ages); }

}  // namespace aoi
