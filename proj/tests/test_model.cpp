#include "stochar/domain.hpp"
#include "stochar/error.hpp"
#include "stochar/io.hpp"
#include "stochar/model.hpp"
#include "stochar/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stochar;

namespace {

const char* kSquare = R"({
  "schema": "stochar.model/1",
  "dim_state": 2, "dim_noise": 1,
  "drift": [[[[0, 2], -1]], 0],
  "sigma": [[0], [1.4142135623730951]],
  "domain": {"kind": "box", "lo": [-1, -1], "hi": [1, 1]}
})";

const char* kBM = R"({
  "schema": "stochar.model/1",
  "dim_state": 1, "dim_noise": 1,
  "drift": [0], "sigma": [[1]],
  "domain": {"kind": "box", "lo": [0], "hi": [1]},
  "sim": {"dt": 0.002, "horizon": 20, "seed": 7}
})";

} // namespace

TEST_CASE("load_model: degenerate square") {
    const auto lm = load_model_text(kSquare);
    CHECK(lm.model.dim_state() == 2);
    CHECK(lm.model.dim_noise() == 1);
    CHECK(lm.model.is_polynomial());
    const double x[] = {0.5, 2.0};
    double b[2], s[2];
    lm.model.drift(x, b);
    lm.model.sigma(x, s);
    CHECK(b[0] == -4.0);
    CHECK(b[1] == 0.0);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(std::sqrt(2.0)));
    CHECK(lm.domain.membership(std::vector<double>{1.0, 0.0}) == Membership::boundary);
}

TEST_CASE("load_model: BM on the unit interval with sim settings") {
    const auto lm = load_model_text(kBM);
    CHECK(lm.sim.dt == 0.002);
    CHECK(lm.sim.horizon == 20.0);
    CHECK(lm.sim.seed == 7u);
    CHECK(lm.model.drift_is_zero());
    CHECK(lm.model.sigma_is_constant());
}

TEST_CASE("load_model: validation errors") {
    CHECK_THROWS_AS(load_model_text("{not json"), ParseError);
    CHECK_THROWS_AS(load_model_text(R"({"schema": "other/1"})"), ParseError);
    // sigma rows != dim_state
    CHECK_THROWS_AS(load_model_text(R"({"schema": "stochar.model/1", "dim_state": 2, "dim_noise": 1,
        "drift": [0, 0], "sigma": [[1]], "domain": {"kind": "full"}})"),
                    DimensionError);
    CHECK_THROWS_AS(load_model_text(R"({"schema": "stochar.model/1", "dim_state": 1, "dim_noise": 1,
        "drift": [0], "sigma": [[1]], "domain": {"kind": "blob"}})"),
                    ParseError);
    CHECK_THROWS_AS(load_model_text(R"({"schema": "stochar.model/1", "dim_state": 1, "dim_noise": 1,
        "drift": {"builtin": "nope"}, "sigma": [[1]], "domain": {"kind": "full"}})"),
                    ParseError);
}

TEST_CASE("load_model: zero noise dimension") {
    const auto lm = load_model_text(R"({"schema": "stochar.model/1", "dim_state": 2, "dim_noise": 0,
        "drift": [1, 0], "sigma": [], "domain": {"kind": "full"}})");
    CHECK(lm.model.dim_noise() == 0);
}

TEST_CASE("built-in coefficients are simulation-only") {
    const auto lm = load_model_text(R"({"schema": "stochar.model/1", "dim_state": 1, "dim_noise": 1,
        "drift": {"builtin": "sine"}, "sigma": [[1]], "domain": {"kind": "full"}})");
    CHECK_FALSE(lm.model.is_polynomial());
    CHECK_THROWS_AS(lm.model.drift_poly(), UnsupportedError);
}

TEST_CASE("domain membership") {
    const auto box = Domain::box({0.0}, {1.0});
    CHECK(box.membership(std::vector<double>{0.5}) == Membership::interior);
    CHECK(box.membership(std::vector<double>{1.0}) == Membership::boundary);
    CHECK(box.membership(std::vector<double>{1.5}) == Membership::exterior);

    const auto ball = Domain::ball({0.0, 0.0}, 1.0);
    const double a = 0.7;
    CHECK(ball.membership(std::vector<double>{std::cos(a), std::sin(a)}) == Membership::boundary);
    CHECK(ball.membership(std::vector<double>{0.1, 0.1}) == Membership::interior);

    const auto half = Domain::halfspace({1.0, 0.0}, 0.5);
    CHECK(half.membership(std::vector<double>{0.5, 9.0}) == Membership::boundary);
    CHECK(half.membership(std::vector<double>{0.0, 9.0}) == Membership::interior);

    MultiPoly p = MultiPoly::monomial({2, 0}, 1.0) + MultiPoly::monomial({0, 2}, 1.0) - MultiPoly::constant(2, 1.0);
    const auto sub = Domain::sublevel(p);
    CHECK(sub.membership(std::vector<double>{0.6, 0.8}) == Membership::boundary);
    CHECK(sub.membership(std::vector<double>{2.0, 0.0}) == Membership::exterior);
    CHECK(Domain::full(3).membership(std::vector<double>{1e9, 0, 0}) == Membership::interior);
}

TEST_CASE("boundary_sample") {
    SUBCASE("ball points lie on the sphere") {
        const auto pts = boundary_sample(Domain::ball({0.0, 0.0}, 1.0), 4, 1);
        REQUIRE(pts.size() == 4);
        for (const auto& p : pts) CHECK(std::hypot(p[0], p[1]) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("1D box boundary is two points") {
        for (const auto& p : boundary_sample(Domain::box({0.0}, {1.0}), 2, 3)) {
            CHECK((p[0] == 0.0 || p[0] == 1.0));
        }
    }
    SUBCASE("ball angles are uniform (chi-square, 1%)") {
        const std::size_t n = 100000;
        const int bins = 16;
        std::vector<double> count(bins, 0.0);
        for (const auto& p : boundary_sample(Domain::ball({0.0, 0.0}, 2.0), n, 99)) {
            const double t = std::atan2(p[1], p[0]) + std::numbers::pi;
            count[std::min(bins - 1, static_cast<int>(t / (2 * std::numbers::pi) * bins))] += 1.0;
        }
        const double e = static_cast<double>(n) / bins;
        double chi2 = 0.0;
        for (double c : count) chi2 += (c - e) * (c - e) / e;
        CHECK(chi2 < 30.578); // 99th percentile, 15 degrees of freedom
    }
}

TEST_CASE("exhaustion covers bounded domains") {
    const auto ex = Exhaustion::balls(2);
    CHECK(ex.first_covering(Domain::box({-1, -1}, {1, 1}), 10) == 2);
    CHECK_FALSE(ex.first_covering(Domain::full(2), 10).has_value());
    CHECK(ex(3).membership(std::vector<double>{3.0, 0.0}) == Membership::boundary);
}

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using P = Philox4x32;
    CHECK(P::generate({0, 0, 0, 0}, {0, 0}) == P::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(P::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          P::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(P::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          P::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("PathStream is a pure function of (seed, stream)") {
    PathStream a(42, 7), b(42, 7), c(42, 8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        if (x != c.normal()) differs = true;
    }
    CHECK(differs);
    PathStream u(1, 0);
    double mean = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double v = u.uniform();
        CHECK((v > 0.0 && v < 1.0));
        mean += v;
    }
    CHECK(mean / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("fmt17 round-trips doubles") {
    const double v = 0.1 + 0.2;
    CHECK(std::stod(io::fmt17(v)) == v);
    CHECK(io::join17(std::vector<double>{1.0, 0.5}) == "1,0.5");
}
