#include <doctest.h>

#include <cmath>

#include "aoi/sim.hpp"
#include "aoi/waterfill.hpp"

using namespace aoi;

namespace {
const Rational unit{1, 1};
}

TEST_CASE("water-fill wait: direct applications") {
    const WaterFillPolicy p{4.0, 3, 100.0};
    CHECK(water_fill_wait(9.0, p) == doctest::Approx(1.0));
    CHECK(water_fill_wait(9.0, {2.0, 3, 100.0}) == doctest::Approx(0.0));  // clipped at zero
    CHECK(water_fill_wait(0.0, {5.0, 3, 100.0}) == doctest::Approx(5.0));  // empty system
    CHECK(water_fill_wait(0.0, {5.0, 3, 2.5}) == doctest::Approx(2.5));    // capped at M
    CHECK_THROWS_AS(water_fill_wait(-1.0, p), std::invalid_argument);
    CHECK_THROWS_AS(Sampler::water_fill({-1.0, 3, 1.0}), std::invalid_argument);
}

TEST_CASE("water-fill wait is non-increasing in the age sum and 1-Lipschitz in th") {
    for (int i = 0; i < 100; ++i) {
        const double a = 0.17 * i;
        const double b = a + 0.31;
        const WaterFillPolicy p{3.7, 4, 50.0};
        CHECK(water_fill_wait(b, p) <= water_fill_wait(a, p) + 1e-12);

        const double th1 = 0.05 * i, th2 = th1 + 0.4;
        const double w1 = water_fill_wait(2.0, {th1, 4, 50.0});
        const double w2 = water_fill_wait(2.0, {th2, 4, 50.0});
        CHECK(std::abs(w2 - w1) <= (th2 - th1) + 1e-12);
    }
}

TEST_CASE("th = 0 reproduces the zero-wait sampler exactly") {
    const auto d = ServiceDistribution::two_point(unit, Rational{0, 1}, Rational{3, 1}, 0.5);
    SimConfig cfg;
    cfg.n_deliveries = 200000;
    cfg.burn_in = 1000;
    cfg.seed = 31;
    const SimResult wf = run(Scheduler::maf(), Sampler::water_fill({0.0, 3, 3.0}), d, 3, cfg);
    const SimResult zw = run(Scheduler::maf(), Sampler::zero_wait(), d, 3, cfg);
    CHECK(wf.taa == zw.taa);    // identical sample paths, not merely close
    CHECK(wf.tapa == zw.tapa);
    CHECK(std::abs(wf.taa - zero_wait_taa(d, 3)) / zero_wait_taa(d, 3) < 0.02);
}

TEST_CASE("golden section finds the minimum of a smooth objective") {
    auto f = [](double x) { return (x - 1.3) * (x - 1.3) + 0.7; };
    const GoldenResult res = golden_section_threshold(f, 4.0, 1e-4);
    CHECK(std::abs(res.th - 1.3) < 1e-3);
    CHECK(res.taa == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(res.probes >= 4);
}

TEST_CASE("golden section tracks the best probe on non-unimodal objectives") {
    // two local minima; the deeper one is near the right edge
    auto f = [](double x) { return std::min((x - 0.5) * (x - 0.5), 0.2 * (x - 3.8) * (x - 3.8) - 0.5); };
    const GoldenResult res = golden_section_threshold(f, 4.0, 1e-3);
    double best_possible = std::min(f(0.0), f(4.0));
    CHECK(res.taa <= best_possible + 1e-9);  // endpoints always probed
}

TEST_CASE("golden section guards") {
    CHECK_THROWS_AS(golden_section_threshold([](double) { return 1.0; }, 0.0, 1e-3),
                    std::invalid_argument);
    CHECK_THROWS_AS(golden_section_threshold([](double) { return 1.0; }, 1.0, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        golden_section_threshold([](double) { return std::nan(""); }, 1.0, 1e-3),
        std::runtime_error);
}

TEST_CASE("searched threshold is never worse than zero-wait") {
    const auto d = ServiceDistribution::two_point(unit, Rational{0, 1}, Rational{3, 1}, 0.5);
    const auto evaluator = make_waterfill_evaluator(d, 3, 3.0, 17, 100000, 1000);
    const GoldenResult res = golden_section_threshold(d, 3, evaluator);
    CHECK(res.taa <= evaluator(0.0) + 1e-12);  // 0 is in the probed set
    CHECK(res.th >= 0.0);
    CHECK(res.th <= zero_wait_taa(d, 3) / 3);
}
