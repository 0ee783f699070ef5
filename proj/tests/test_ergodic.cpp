#include "stochar/ergodic.hpp"
#include "stochar/error.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stochar;

namespace {

DiffusionModel model_1d(MultiPoly b, double s) {
    PolyMatrix sig(1, 1, 1);
    sig(0, 0) = MultiPoly::constant(1, s);
    return DiffusionModel(PolyVectorField({std::move(b)}), sig);
}

MultiPoly c1(double v) { return MultiPoly::constant(1, v); }
MultiPoly x1(double c, std::uint32_t k = 1) { return MultiPoly::monomial({k}, c); }

DiffusionModel ou() { return model_1d(x1(-1.0), 1.0); }

SimConfig cfg(double dt, double horizon, std::uint64_t seed = 41) {
    SimConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("certify_nonexplosive") {
    const auto w = c1(1.0) + x1(1.0, 2);
    SUBCASE("BM with w = 1 + x^2") {
        const auto c = certify_nonexplosive(model_1d(c1(0.0), 1.0), w, Exhaustion::balls(1), 1.0, 1.0, 5, 41);
        CHECK(c.valid);
        CHECK(c.residual == c1(-1.0) + x1(-1.0, 2));
        for (std::size_t k = 0; k < c.levels.size(); ++k) {
            const double r = static_cast<double>(k + 1);
            CHECK(c.levels[k].w_k == doctest::Approx(1.0 + r * r));
        }
    }
    SUBCASE("constant w cannot grow") {
        const auto c = certify_nonexplosive(model_1d(c1(0.0), 1.0), c1(2.0), Exhaustion::balls(1), 1.0, 1.0, 5, 21);
        CHECK_FALSE(c.valid);
        CHECK_FALSE(c.growth_ok);
    }
    SUBCASE("cubic drift explodes") {
        const auto c = certify_nonexplosive(model_1d(x1(1.0, 3), 1.0), w, Exhaustion::balls(1), 1.0, 1.0, 5, 41);
        CHECK_FALSE(c.valid);
        CHECK_FALSE(c.residual_nonpositive);
        REQUIRE(c.witness.has_value());
        const double px = c.residual(*c.witness);
        CHECK(px > 0.0);
        CHECK(c.residual == c1(-1.0) + x1(-1.0, 2) + x1(2.0, 4) + c1(1.0) - c1(1.0));
    }
    SUBCASE("built-in coefficients are rejected") {
        DiffusionModel m(1, 1, [](std::span<const double>, std::span<double> o) { o[0] = 0.0; },
                         [](std::span<const double>, std::span<double> o) { o[0] = 1.0; });
        CHECK_THROWS_AS(certify_nonexplosive(m, w, Exhaustion::balls(1), 1.0, 1.0, 2, 11), UnsupportedError);
    }
}

TEST_CASE("run_cycles") {
    const CycleConfig cc{{0.0}, 0.5, 1.0};
    SUBCASE("OU: every cycle completes") {
        const auto s = run_cycles(ou(), cc, 1000, cfg(1e-2, 1000.0));
        CHECK(s.completed() == 1000);
        CHECK(s.censored_cycles == 0);
        for (const auto& p : s.start_points) CHECK(std::abs(std::abs(p[0]) - 0.5) < 1e-12);
    }
    SUBCASE("drifted BM: censoring grows with the drift") {
        const auto weak = run_cycles(model_1d(c1(1.0), 1.0), cc, 200, cfg(1e-2, 50.0));
        CHECK(weak.completed() < 200);
        CHECK(weak.censored_fraction() > 0.0);
        try {
            run_cycles(model_1d(c1(4.0), 1.0), cc, 200, cfg(1e-2, 50.0));
            FAIL("expected every cycle to be censored");
        } catch (const EstimationError& e) {
            CHECK(e.censored_fraction() == 1.0);
        }
    }
    SUBCASE("frozen dynamics never complete a cycle") {
        CHECK_THROWS_AS(run_cycles(model_1d(c1(0.0), 0.0), cc, 10, cfg(1e-2, 5.0)), EstimationError);
    }
    CHECK_THROWS_AS((CycleConfig{{0.0}, 1.0, 0.5}.validate(1)), UsageError);
}

TEST_CASE("embedded chain") {
    SUBCASE("OU in 1D: both points equally likely") {
        const auto s = run_cycles(ou(), CycleConfig{{0.0}, 0.5, 1.0}, 4000, cfg(1e-2, 1000.0));
        const auto nu = embedded_chain_stationary(s, 5);
        REQUIRE(nu.mass.size() == 2);
        CHECK(std::abs(nu.mass[0] - 0.5) <= 3.0 * nu.std_error[0]);
        CHECK(nu.mass[0] + nu.mass[1] == doctest::Approx(1.0));
    }
    SUBCASE("a single cycle is a point mass") {
        CycleOptions one;
        one.n_chains = 1;
        const auto s = run_cycles(ou(), CycleConfig{{0.0}, 0.5, 1.0}, 1, cfg(1e-2, 1000.0), std::nullopt, one);
        const auto nu = embedded_chain_stationary(s, 0);
        int nonzero = 0;
        for (double m : nu.mass) nonzero += m > 0.0 ? 1 : 0;
        CHECK(nonzero == 1);
    }
    SUBCASE("isotropic 2D OU: uniform angles (chi-square, 1%)") {
        PolyMatrix sig(2, 2, 2);
        sig(0, 0) = MultiPoly::constant(2, 1.0);
        sig(1, 1) = MultiPoly::constant(2, 1.0);
        DiffusionModel m(PolyVectorField({MultiPoly::monomial({1, 0}, -1.0), MultiPoly::monomial({0, 1}, -1.0)}), sig);
        const auto s = run_cycles(m, CycleConfig{{0.0, 0.0}, 0.5, 1.0}, 2000, cfg(1e-2, 1000.0));
        const auto nu = embedded_chain_stationary(s, 2, 8);
        REQUIRE(nu.mass.size() == 8);
        double chi2 = 0.0;
        const double n = static_cast<double>(nu.n_used);
        for (double p : nu.mass) chi2 += n * (p - 0.125) * (p - 0.125) / 0.125;
        CHECK(chi2 < 18.475); // 99th percentile, 7 degrees of freedom
    }
}

TEST_CASE("invariant measure") {
    SUBCASE("OU against N(0, 1/2)") {
        const Grid grid({-3.0}, {3.0}, {50});
        const auto s = run_cycles(ou(), CycleConfig{{0.0}, 0.5, 1.0}, 3000, cfg(1e-2, 1000.0), grid);
        const auto mu = estimate_invariant_measure(s, 5);
        CHECK(mu.total_mass() == doctest::Approx(1.0).epsilon(1e-9));
        const auto p = oracle::normal_cells(-3.0, 3.0, 50, 0.5);
        const double outside = 1.0 - oracle::normal_mass(-3.0, 3.0, 0.5);
        CHECK(l1_distance(mu, p, outside) < 0.15);
    }
    SUBCASE("hand-built sample: all time in one cell") {
        CycleSample s;
        s.dim = 1;
        s.config = CycleConfig{{0.0}, 0.5, 1.0};
        s.grid = Grid({-1.0}, {1.0}, {4});
        s.n_chains = 1;
        for (int k = 0; k < 200; ++k) {
            s.chain.push_back(0);
            s.start_points.push_back({0.5});
            s.durations.push_back(2.0);
            s.occupation.push_back({{2u, 2.0}});
            s.outside.push_back(0.0);
        }
        const auto mu = estimate_invariant_measure(s, 0);
        CHECK(mu.mu_tilde[2] == 1.0);
        CHECK(mu.mu_tilde[0] + mu.mu_tilde[1] + mu.mu_tilde[3] == 0.0);
    }
    SUBCASE("too few cycles") {
        const Grid grid({-3.0}, {3.0}, {10});
        const auto s = run_cycles(ou(), CycleConfig{{0.0}, 0.5, 1.0}, 20, cfg(1e-2, 1000.0), grid);
        CHECK_THROWS_AS(estimate_invariant_measure(s, 0), EstimationError);
    }
}

TEST_CASE("classify_recurrence") {
    const std::vector<double> c{0.0};
    SUBCASE("OU is positive recurrent") {
        const double hs[] = {10.0, 100.0};
        const auto r = classify_recurrence(ou(), c, 1.0, {{2.0}}, hs, 1000, cfg(1e-2, 100.0));
        CHECK(r.verdict == RecurrenceVerdict::positive_recurrent_evidence);
    }
    SUBCASE("drifted BM is transient") {
        const double hs[] = {10.0, 30.0, 100.0};
        const auto r = classify_recurrence(model_1d(c1(1.0), 1.0), c, 1.0, {{2.0}}, hs, 4000, cfg(1e-2, 100.0));
        CHECK(r.verdict == RecurrenceVerdict::transient_evidence);
        const auto& last = r.starts[0].rows.back().hit_probability;
        CHECK(std::abs(last.mean - oracle::drifted_hit_probability(1.0, 1.0)) <= 3.0 * last.std_error + 0.01);
    }
    const double hs[] = {10.0, 100.0};
    CHECK_THROWS_AS(classify_recurrence(ou(), c, 1.0, {{0.5}}, hs, 10, cfg(1e-2, 100.0)), UsageError);
}

TEST_CASE("exponential exit moments") {
    const auto bm = model_1d(c1(0.0), 1.0);
    SUBCASE("unit interval: principal eigenvalue pi^2/2") {
        const double ds[] = {0.0, 0.5, 2.0, 6.0};
        const auto r = estimate_exp_exit_bound(bm, Domain::box({0.0}, {1.0}), ds, {{0.25}, {0.5}, {0.75}}, 4000,
                                               cfg(1e-3, 2.0));
        CHECK(r.rows[0].sup_estimate == 1.0);
        CHECK_FALSE(r.rows[1].censor_dominated);
        CHECK(std::abs(r.rows[1].sup_estimate - oracle::bm_exp_moment(0.5, 0.5)) <= 3.0 * r.rows[1].std_error + 0.01);
        CHECK_FALSE(r.rows[2].censor_dominated);
        CHECK(r.rows[3].censor_dominated);
        CHECK(r.largest_finite_delta == 2.0);
    }
    SUBCASE("interval (-1, 1): threshold pi^2/8") {
        const double ds[] = {0.5, 2.0};
        const auto r = estimate_exp_exit_bound(bm, Domain::box({-1.0}, {1.0}), ds, {{-0.5}, {0.0}, {0.5}}, 4000,
                                               cfg(1e-3, 8.0));
        CHECK_FALSE(r.rows[0].censor_dominated);
        CHECK(r.rows[1].censor_dominated);
    }
    SUBCASE("frozen dynamics") {
        const double ds[] = {0.1, 1.0};
        const auto r = estimate_exp_exit_bound(model_1d(c1(0.0), 0.0), Domain::box({0.0}, {1.0}), ds, {{0.5}}, 10,
                                               cfg(1e-2, 2.0));
        CHECK(r.all_censored);
        for (const auto& row : r.rows) CHECK(row.censor_dominated);
        CHECK_FALSE(r.largest_finite_delta.has_value());
    }
}
