#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/solver.hpp"
#include "aoi/waterfill.hpp"

namespace aoi {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// mt19937_64 with hand-rolled sampling helpers. The engine itself is fully
/// specified by the standard; std's distributions are not, so rolling our own
/// keeps runs bit-identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    std::size_t uniform_index(std::size_t n) {
        return std::min(static_cast<std::size_t>(u01() * static_cast<double>(n)), n - 1);
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace detail

struct Scheduler {
    enum class Kind { Maf, Rand };
    Kind kind = Kind::Maf;

    static Scheduler maf() { return {Kind::Maf}; }
    static Scheduler random() { return {Kind::Rand}; }
    std::string label() const { return kind == Kind::Maf ? "maf" : "rand"; }
};

/// Sampling policy evaluated by the simulator. Emits the waiting time after a
/// delivery, given the current per-source ages; never sees future service times.
class Sampler {
  public:
    enum class Kind { ZeroWait, ConstantWait, Table, WaterFill };

    static Sampler zero_wait() { return Sampler(Kind::ZeroWait); }

    static Sampler constant_wait(double c) {
        if (!(c >= 0.0)) throw std::invalid_argument("constant_wait: wait must be >= 0");
        Sampler s(Kind::ConstantWait);
        s.constant_ = c;
        return s;
    }

    /// Table sampler over a solved policy; states missing from the table
    /// (transient starts) fall back to zero wait.
    static Sampler table(const PolicyTable& policy) {
        Sampler s(Kind::Table);
        s.table_ = &policy;
        return s;
    }

    static Sampler water_fill(const WaterFillPolicy& policy) {
        policy.validate();
        Sampler s(Kind::WaterFill);
        s.wf_ = policy;
        return s;
    }

    Kind kind() const { return kind_; }

    /// Largest wait this sampler may emit; the simulator aborts on anything outside [0, cap].
    double cap() const {
        switch (kind_) {
            case Kind::ZeroWait: return 0.0;
            case Kind::ConstantWait: return constant_;
            case Kind::Table: return table_->space().grid().max_wait_time();
            case Kind::WaterFill: return wf_.max_wait_time;
        }
        return 0.0;
    }

    std::string label() const {
        switch (kind_) {
            case Kind::ZeroWait: return "zero";
            case Kind::ConstantWait: return "const:" + format_g17(constant_);
            case Kind::Table: return "table";
            case Kind::WaterFill: return "waterfill";
        }
        return "?";
    }

    double wait_for(std::span<const double> ages, bool* fallback = nullptr) const {
        switch (kind_) {
            case Kind::ZeroWait:
                return 0.0;
            case Kind::ConstantWait:
                return constant_;
            case Kind::WaterFill: {
                double sum = 0.0;
                for (double a : ages) sum += a;
                return water_fill_wait(sum, wf_);
            }
            case Kind::Table: {
                const double td = table_->space().dist().tick().to_double();
                std::vector<Tick> ticks(ages.size());
                for (std::size_t l = 0; l < ages.size(); ++l) {
                    const double q = ages[l] / td;
                    const double r = std::nearbyint(q);
                    if (std::abs(q - r) > 1e-6) {  // off the tick lattice
                        if (fallback) *fallback = true;
                        return 0.0;
                    }
                    ticks[l] = static_cast<Tick>(r);
                }
                std::sort(ticks.begin(), ticks.end(), std::greater<>());
                const Tick w = table_->wait_for(SortedAgeState(std::move(ticks)));
                if (w == PolicyTable::npos_tick) {
                    if (fallback) *fallback = true;
                    return 0.0;
                }
                return static_cast<double>(w) * td;
            }
        }
        return 0.0;
    }

  private:
    explicit Sampler(Kind k) : kind_(k) {}

    Kind kind_;
    double constant_ = 0.0;
    const PolicyTable* table_ = nullptr;
    WaterFillPolicy wf_{};
};

struct SimConfig {
    long n_deliveries = 100000;
    long burn_in = 1000;                 // deliveries discarded from the estimators; >= m
    std::uint64_t seed = 1;
    std::vector<double> initial_ages;    // per source; empty = all zero
    const std::vector<double>* replay_services = nullptr;  // coupled runs share one drawn sequence
    bool record_trace = false;
    bool record_sorted_ages = false;     // post-delivery sorted age vectors, for dominance checks
};

struct TraceRecord {
    long delivery;   // i, 1-based
    int source;      // r_i
    double generated, delivered, wait, service, peak;
    std::vector<double> sorted_ages;  // descending, just after the delivery
};

struct SimResult {
    double tapa = 0.0;
    double taa = 0.0;
    long deliveries_counted = 0;
    double window_duration = 0.0;
    std::vector<double> final_ages;
    long table_fallbacks = 0;
    long last_fallback_stage = -1;  // stage index of the latest fallback, -1 if none
    std::vector<TraceRecord> trace;
    std::vector<std::vector<double>> sorted_ages;
};

/// Pre-draws a service-time sequence (time units) for coupled runs.
inline std::vector<double> draw_service_sequence(const ServiceDistribution& dist, long n,
                                                 std::uint64_t seed) {
    std::uint64_t sm = seed;
    detail::Rng rng(detail::splitmix64(sm));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double u = rng.u01();
        double acc = 0.0;
        std::size_t k = 0;
        for (; k + 1 < dist.support_size(); ++k) {
            acc += dist.prob(k);
            if (u < acc) break;
        }
        out.push_back(dist.time_of(dist.value(k)));
    }
    return out;
}

/// Discrete-event simulation of n packet deliveries.
///
/// Stage i covers [D_i, D_{i+1}): the scheduler picks the source, the sampler
/// the wait z, then the service y is drawn and delivery i+1 happens. Ages are
/// piecewise linear, so the age areas accumulate exactly as
/// A_i (z+y) + m (z+y)^2 / 2 per stage; the peak of delivery i+1 is the served
/// source's age just before it. Fully deterministic for a given seed.
inline SimResult run(const Scheduler& scheduler, const Sampler& sampler,
                     const ServiceDistribution& dist, int m, const SimConfig& cfg) {
    if (m < 1) throw std::invalid_argument("run: m must be >= 1");
    if (cfg.n_deliveries < 1) throw std::invalid_argument("run: n_deliveries must be >= 1");
    if (cfg.burn_in < m || cfg.burn_in >= cfg.n_deliveries)
        throw std::invalid_argument("run: burn_in must satisfy m <= burn_in < n_deliveries");
    if (!cfg.initial_ages.empty() && cfg.initial_ages.size() != static_cast<std::size_t>(m))
        throw std::invalid_argument("run: initial ages must have one entry per source");
    if (cfg.replay_services &&
        cfg.replay_services->size() < static_cast<std::size_t>(cfg.n_deliveries))
        throw std::invalid_argument("run: replayed service sequence too short");

    std::uint64_t sm = cfg.seed;
    detail::Rng service_rng(detail::splitmix64(sm));
    detail::Rng scheduler_rng(detail::splitmix64(sm));

    std::vector<double> ages(static_cast<std::size_t>(m), 0.0);
    for (std::size_t l = 0; l < cfg.initial_ages.size(); ++l) {
        if (cfg.initial_ages[l] < 0.0) throw std::invalid_argument("run: negative initial age");
        ages[l] = cfg.initial_ages[l];
    }

    std::vector<double> values_time(dist.support_size());
    std::vector<double> cdf(dist.support_size());
    double acc = 0.0;
    for (std::size_t k = 0; k < dist.support_size(); ++k) {
        values_time[k] = dist.time_of(dist.value(k));
        acc += dist.prob(k);
        cdf[k] = acc;
    }
    cdf.back() = 1.0;

    auto draw_service = [&]() {
        const double u = service_rng.u01();
        std::size_t k = 0;
        while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
        return values_time[k];
    };

    const double wait_cap = sampler.cap();
    SimResult res;
    if (cfg.record_trace) res.trace.reserve(static_cast<std::size_t>(cfg.n_deliveries));
    if (cfg.record_sorted_ages) res.sorted_ages.reserve(static_cast<std::size_t>(cfg.n_deliveries));

    double area = 0.0, duration = 0.0, peak_sum = 0.0;
    long peaks = 0;
    double clock = 0.0;  // absolute D_i, used by the trace only

    for (long i = 0; i < cfg.n_deliveries; ++i) {
        const std::size_t r = scheduler.kind == Scheduler::Kind::Maf
                                  ? maf_pick(ages)
                                  : scheduler_rng.uniform_index(static_cast<std::size_t>(m));
        bool fell_back = false;
        const double z = sampler.wait_for(ages, &fell_back);
        if (fell_back) {
            ++res.table_fallbacks;
            res.last_fallback_stage = i;
        }
        if (!(z >= 0.0) || z > wait_cap + 1e-9)
            throw std::runtime_error("run: sampler emitted invalid wait " + format_g17(z) +
                                     " (cap " + format_g17(wait_cap) + ") at stage " +
                                     std::to_string(i));
        const double y = cfg.replay_services ? (*cfg.replay_services)[static_cast<std::size_t>(i)]
                                             : draw_service();
        const double gap = z + y;
        const double peak = ages[r] + gap;

        if (i >= cfg.burn_in) {
            double sum = 0.0;
            for (double a : ages) sum += a;
            area += sum * gap + 0.5 * m * gap * gap;
            duration += gap;
            peak_sum += peak;
            ++peaks;
        }

        for (double& a : ages) a += gap;
        ages[r] = y;

        if (cfg.record_trace) {
            TraceRecord rec;
            rec.delivery = i + 1;
            rec.source = static_cast<int>(r);
            rec.generated = clock + z;
            rec.delivered = clock + gap;
            rec.wait = z;
            rec.service = y;
            rec.peak = peak;
            rec.sorted_ages = ages;
            std::sort(rec.sorted_ages.begin(), rec.sorted_ages.end(), std::greater<>());
            res.trace.push_back(std::move(rec));
        }
        if (cfg.record_sorted_ages) {
            std::vector<double> sorted = ages;
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            res.sorted_ages.push_back(std::move(sorted));
        }
        clock += gap;
    }

    if (!(duration > 0.0)) throw std::runtime_error("run: estimation window has zero duration");
    res.tapa = peak_sum / static_cast<double>(peaks);
    res.taa = area / duration;
    res.deliveries_counted = peaks;
    res.window_duration = duration;
    res.final_ages = std::move(ages);
    return res;
}

struct CiEstimate {
    double tapa = 0.0, tapa_hw = 0.0;
    double taa = 0.0, taa_hw = 0.0;
    int replications = 0;
};

/// Independent-seed replications (seed, seed+1, ...) with normal-approximation
/// 95% half-widths.
inline CiEstimate estimate_with_ci(const Scheduler& scheduler, const Sampler& sampler,
                                   const ServiceDistribution& dist, int m, SimConfig cfg,
                                   int replications) {
    if (replications < 2) throw std::invalid_argument("estimate_with_ci: replications must be >= 2");
    std::vector<double> tapas, taas;
    const std::uint64_t base = cfg.seed;
    for (int r = 0; r < replications; ++r) {
        cfg.seed = base + static_cast<std::uint64_t>(r);
        const SimResult res = run(scheduler, sampler, dist, m, cfg);
        tapas.push_back(res.tapa);
        taas.push_back(res.taa);
    }
    auto mean_hw = [&](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= (xs.size() - 1);
        return std::pair{mean, 1.959963984540054 * std::sqrt(var / xs.size())};
    };
    CiEstimate est;
    est.replications = replications;
    std::tie(est.tapa, est.tapa_hw) = mean_hw(tapas);
    std::tie(est.taa, est.taa_hw) = mean_hw(taas);
    return est;
}

/// Counts delivery epochs at which the coupled MAF run is NOT componentwise
/// dominated by the other scheduler's run (same replayed services, same
/// sampler). Zero everywhere is the sample-path optimality statement.
inline long coupled_dominance_violations(const ServiceDistribution& dist, int m, long n,
                                         std::uint64_t seed, const Sampler& sampler,
                                         Scheduler other = Scheduler::random()) {
    const std::vector<double> services = draw_service_sequence(dist, n, seed);
    SimConfig cfg;
    cfg.n_deliveries = n;
    cfg.burn_in = m;  // estimators unused here; dominance is checked on every epoch
    cfg.seed = seed;
    cfg.replay_services = &services;
    cfg.record_sorted_ages = true;
    const SimResult maf = run(Scheduler::maf(), sampler, dist, m, cfg);
    const SimResult alt = run(other, sampler, dist, m, cfg);
    long violations = 0;
    for (std::size_t i = 0; i < maf.sorted_ages.size(); ++i)
        for (int l = 0; l < m; ++l)
            if (maf.sorted_ages[i][static_cast<std::size_t>(l)] >
                alt.sorted_ages[i][static_cast<std::size_t>(l)] + 1e-9)
                ++violations;
    return violations;
}

/// Deterministic fixed-seed evaluator mapping a water-filling threshold to
/// the simulated TaA of (MAF, water-fill(th)).
inline std::function<double(double)> make_waterfill_evaluator(const ServiceDistribution& dist,
                                                              int m, double max_wait_time,
                                                              std::uint64_t seed,
                                                              long n = 200000, long burn_in = 1000) {
    return [=](double th) {
        SimConfig cfg;
        cfg.n_deliveries = n;
        cfg.burn_in = burn_in;
        cfg.seed = seed;
        return run(Scheduler::maf(), Sampler::water_fill({th, m, max_wait_time}), dist, m, cfg).taa;
    };
}

}  // namespace aoi
