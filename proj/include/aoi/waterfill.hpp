#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "aoi/model.hpp"
#include "aoi/solver.hpp"

namespace aoi {

/// Water-filling approximation of the TaA-optimal sampler: wait
/// [th - A_s/m]^+, capped at the maximum allowed wait.
struct WaterFillPolicy {
    double th = 0.0;            // threshold, time units
    int m = 1;                  // source count
    double max_wait_time = 0.0; // cap M, time units

    void validate() const {
        if (!(th >= 0.0)) throw std::invalid_argument("WaterFillPolicy: th must be >= 0");
        if (m < 1) throw std::invalid_argument("WaterFillPolicy: m must be >= 1");
        if (!(max_wait_time >= 0.0)) throw std::invalid_argument("WaterFillPolicy: bad wait cap");
    }
};

inline double water_fill_wait(double sum_age_time, const WaterFillPolicy& policy) {
    if (!(sum_age_time >= 0.0)) throw std::invalid_argument("water_fill_wait: negative age sum");
    const double w = policy.th - sum_age_time / policy.m;
    return std::min(std::max(w, 0.0), policy.max_wait_time);
}

struct GoldenResult {
    double th = 0.0;   // best probed threshold
    double taa = 0.0;  // evaluator value at th
    int probes = 0;
};

/// One-dimensional golden-section search for the water-filling threshold.
///
/// The evaluator maps th to the TaA of (MAF, water-fill(th)) and must be
/// deterministic. The objective is treated as unimodal, but every probed
/// point (including both endpoints) is tracked so a non-unimodal objective
/// still returns the best probe.
inline GoldenResult golden_section_threshold(const std::function<double(double)>& evaluator,
                                             double search_hi, double tol = 1e-3) {
    if (!(search_hi > 0.0)) throw std::invalid_argument("golden_section_threshold: search_hi must be > 0");
    if (!(tol > 0.0)) throw std::invalid_argument("golden_section_threshold: tol must be > 0");

    GoldenResult best;
    best.taa = std::numeric_limits<double>::infinity();
    auto probe = [&](double th) {
        const double v = evaluator(th);
        if (!std::isfinite(v))
            throw std::runtime_error("golden_section_threshold: evaluator returned a non-finite value");
        ++best.probes;
        if (v < best.taa) {
            best.taa = v;
            best.th = th;
        }
        return v;
    };

    constexpr double invphi = 0.6180339887498949;  // (sqrt(5)-1)/2
    double a = 0.0, b = search_hi;
    probe(a);
    probe(b);
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = probe(x1);
    double f2 = probe(x2);
    while (b - a > tol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = probe(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = probe(x2);
        }
    }
    return best;
}

/// Convenience overload defaulting the search interval to
/// [0, zero-wait TaA / m].
inline GoldenResult golden_section_threshold(const ServiceDistribution& dist, int m,
                                             const std::function<double(double)>& evaluator,
                                             double search_hi = -1.0, double tol = 1e-3) {
    if (search_hi <= 0.0) search_hi = zero_wait_taa(dist, m) / m;
    return golden_section_threshold(evaluator, search_hi, tol);
}

}  // namespace aoi
