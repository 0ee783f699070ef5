#include "stochar/boundary.hpp"
#include "stochar/error.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace stochar;

namespace {

DiffusionModel model_1d(double b, double s) {
    PolyMatrix sig(1, 1, 1);
    sig(0, 0) = MultiPoly::constant(1, s);
    return DiffusionModel(PolyVectorField({MultiPoly::constant(1, b)}), sig);
}

DiffusionModel degenerate_square() {
    PolyMatrix sig(2, 1, 2);
    sig(1, 0) = MultiPoly::constant(2, std::sqrt(2.0));
    return DiffusionModel(PolyVectorField({MultiPoly::monomial({0, 2}, -1.0), MultiPoly(2)}), sig);
}

const Domain unit = Domain::box({0.0}, {1.0});
const Domain square = Domain::box({-1.0, -1.0}, {1.0, 1.0});
const Domain half_line = Domain::halfspace({-1.0}, 0.0); // x > 0

SimConfig cfg(double dt, double horizon, std::uint64_t seed = 31) {
    SimConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("probe_regularity") {
    const double hs[] = {1e-3, 3e-3, 1e-2};
    SUBCASE("BM at 0 is regular") {
        const auto p = probe_regularity(model_1d(0.0, 1.0), unit, std::vector<double>{0.0}, hs, 5000, cfg(1e-4, 1.0));
        CHECK(p.verdict == RegularityVerdict::regular_evidence);
        for (const auto& e : p.estimates) CHECK(e.mean > 0.99);
    }
    SUBCASE("degenerate square at (1,0) is irregular") {
        const auto p =
            probe_regularity(degenerate_square(), square, std::vector<double>{1.0, 0.0}, hs, 10000, cfg(1e-4, 1.0));
        CHECK(p.verdict == RegularityVerdict::irregular_evidence);
        CHECK(p.estimates.back().mean == 0.0);
    }
    SUBCASE("deterministic outward drift is regular at resolution dt") {
        const auto p = probe_regularity(model_1d(-1.0, 0.0), unit, std::vector<double>{0.0}, hs, 10, cfg(1e-4, 1.0));
        CHECK(p.verdict == RegularityVerdict::regular_evidence);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(probe_regularity(model_1d(0.0, 1.0), unit, std::vector<double>{0.5}, hs, 10, cfg(1e-4, 1.0)),
                        UsageError);
        CHECK_THROWS_AS(probe_regularity(model_1d(0.0, 1.0), unit, std::vector<double>{0.0}, hs, 10, cfg(1e-3, 1.0)),
                        UsageError);
    }
}

TEST_CASE("construct_sphere_witness") {
    const auto w = construct_sphere_witness(model_1d(0.0, 1.0), unit, std::vector<double>{0.0},
                                            std::vector<double>{-1.0}, 0.1, 200.0);
    CHECK(w.normal_form == 1.0);
    CHECK(w.value(std::vector<double>{0.0}) == 0.0);
    CHECK(w.value(std::vector<double>{0.05}) > 0.0);
    SUBCASE("no noise across the right edge of the degenerate square") {
        try {
            construct_sphere_witness(degenerate_square(), square, std::vector<double>{1.0, 0.0},
                                     std::vector<double>{1.0, 0.0}, 0.1, 200.0);
            FAIL("expected ConditionError");
        } catch (const ConditionError& e) {
            CHECK(e.value() == 0.0);
        }
    }
    SUBCASE("x' inside the closure") {
        CHECK_THROWS_AS(construct_sphere_witness(model_1d(0.0, 1.0), unit, std::vector<double>{0.0},
                                                 std::vector<double>{1.0}, 0.1, 200.0),
                        UsageError);
    }
    SUBCASE("gradient and Hessian match finite differences") {
        const auto w2 = construct_sphere_witness(degenerate_square(), square, std::vector<double>{0.3, 1.0},
                                                 std::vector<double>{0.0, 1.0}, 0.2, 5.0);
        const std::vector<double> x{0.1, 0.8};
        double g[2], H[4];
        w2.gradient(x, g);
        w2.hessian(x, H);
        const double e = 1e-5;
        for (int i = 0; i < 2; ++i) {
            auto xp = x, xm = x;
            xp[i] += e;
            xm[i] -= e;
            CHECK(g[i] == doctest::Approx((w2.value(xp) - w2.value(xm)) / (2 * e)).epsilon(1e-6));
            double gp[2], gm[2];
            w2.gradient(xp, gp);
            w2.gradient(xm, gm);
            for (int j = 0; j < 2; ++j) CHECK(H[i * 2 + j] == doctest::Approx((gp[j] - gm[j]) / (2 * e)).epsilon(1e-6));
        }
    }
}

TEST_CASE("certify_nice_point") {
    const auto bm = model_1d(0.0, 1.0);
    const std::vector<double> x0{0.0};
    SUBCASE("sphere witness for BM at 0") {
        const auto w = construct_sphere_witness(bm, unit, x0, std::vector<double>{-1.0}, 0.1, 200.0);
        const auto c = certify_nice_point(bm, unit, x0, w, 0.05, 41);
        CHECK(c.valid);
        CHECK(c.vanishes_at_x_star);
        CHECK(c.max_Lw < 0.0);
    }
    SUBCASE("|x - x*|^2 has L w = 1 > 0") {
        const auto c = certify_nice_point(bm, unit, x0, MultiPoly::monomial({2}, 1.0), 0.05, 21);
        CHECK_FALSE(c.valid);
        CHECK_FALSE(c.generator_negative);
        CHECK(c.positive);
        REQUIRE(c.Lw.has_value());
        CHECK(*c.Lw == MultiPoly::constant(1, 1.0));
    }
    SUBCASE("w = 0 is not positive") {
        const auto c = certify_nice_point(bm, unit, x0, MultiPoly(1), 0.05, 21);
        CHECK_FALSE(c.valid);
        CHECK_FALSE(c.positive);
    }
    CHECK_THROWS_AS(certify_nice_point(bm, unit, x0, MultiPoly(1), 0.05, 2), UsageError);
}

TEST_CASE("uniform integrability diagnostics") {
    const double Ms[] = {0.5, 1.0, 2.0, 4.0};
    const auto c = cfg(1e-3, 20.0);
    SUBCASE("bounded g on a bounded domain: tails vanish above sup |g|") {
        const auto r = diagnose_uid(model_1d(0.0, 1.0), unit, ScalarFn::indicator({1.0}, 1.0),
                                    std::vector<double>{0.0}, 0.2, Ms, 500, c);
        CHECK(r.tails[1] == 0.0);
        CHECK(r.tails[3] == 0.0);
        CHECK(r.passes);
    }
    SUBCASE("g = 0") {
        const auto r = diagnose_uid(model_1d(0.0, 1.0), unit, ScalarFn::constant(1, 0.0), std::vector<double>{0.0},
                                    0.2, Ms, 200, c);
        for (double t : r.tails) CHECK(t == 0.0);
    }
    SUBCASE("transient drift with g = x: tails persist") {
        const auto r = diagnose_uid(model_1d(1.0, 1.0), half_line, ScalarFn::polynomial(MultiPoly::monomial({1}, 1.0)),
                                    std::vector<double>{0.0}, 0.5, Ms, 300, cfg(1e-2, 20.0));
        CHECK(r.tails.back() > 1.0);
        CHECK_FALSE(r.passes);
    }
    SUBCASE("f = 0 running cost") {
        const auto r = diagnose_uip(model_1d(0.0, 1.0), unit, ScalarFn::constant(1, 0.0), std::vector<double>{0.0},
                                    0.2, Ms, 200, c);
        for (double t : r.tails) CHECK(t == 0.0);
    }
    SUBCASE("exit times of BM have thin tails") {
        const auto r = diagnose_uip(model_1d(0.0, 1.0), unit, ScalarFn::constant(1, 1.0), std::vector<double>{0.0},
                                    0.2, Ms, 2000, c);
        // E[tau 1{tau > M}] = M S(M) + int_M^inf S, largest at the far edge of the ball.
        auto tail = [](double x, double M) {
            double integral = 0.0;
            for (double t = M; t < M + 20.0; t += 1e-3) integral += 1e-3 * oracle::bm_survival(x, t + 5e-4);
            return M * oracle::bm_survival(x, M) + integral;
        };
        CHECK(r.tails[1] < 2.0 * tail(0.2, 1.0));
        CHECK(r.tails[2] < 1e-3);
        CHECK(r.tails[3] == 0.0);
        for (std::size_t k = 1; k < r.tails.size(); ++k) CHECK(r.tails[k] <= r.tails[k - 1]);
    }
    SUBCASE("near an irregular point of the degenerate square: finite tails") {
        const double Mt[] = {1.0, 2.0, 4.0};
        const auto r = diagnose_uip(degenerate_square(), square, ScalarFn::constant(2, 1.0),
                                    std::vector<double>{1.0, 0.0}, 0.1, Mt, 300, cfg(1e-3, 30.0));
        for (double t : r.tails) CHECK(std::isfinite(t));
    }
}

TEST_CASE("condition CE") {
    SUBCASE("bounded domain: trivially satisfied") {
        const auto r = diagnose_ce(model_1d(0.0, 1.0), unit, std::vector<double>{0.0}, Exhaustion::balls(1), 0.1, 100,
                                   cfg(1e-3, 10.0));
        CHECK(r.success);
        CHECK(r.trivial);
        for (const auto& row : r.rows) CHECK(row.max_probability == 0.0);
    }
    SUBCASE("BM on the half line: gambler's ruin") {
        const auto r = diagnose_ce(model_1d(0.0, 1.0), half_line, std::vector<double>{0.0}, Exhaustion::balls(1), 0.1,
                                   1000, cfg(1e-3, 200.0));
        REQUIRE(r.success);
        REQUIRE(r.n.has_value());
        REQUIRE(r.delta2.has_value());
        CHECK(oracle::gamblers_ruin(*r.delta2, *r.n) < 0.1 + 0.05);
        for (const auto& row : r.rows) {
            if (row.n == *r.n && row.delta2 == *r.delta2) CHECK(row.max_probability < 0.1);
        }
    }
    SUBCASE("deterministic escape fails") {
        const auto r = diagnose_ce(model_1d(1.0, 0.0), half_line, std::vector<double>{0.0}, Exhaustion::balls(1), 0.1,
                                   20, cfg(1e-2, 100.0));
        CHECK_FALSE(r.success);
        for (const auto& row : r.rows) CHECK(row.max_probability == 1.0);
    }
}
