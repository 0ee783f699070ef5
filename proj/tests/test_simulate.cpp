#include "stochar/error.hpp"
#include "stochar/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace stochar;

namespace {

MultiPoly c1(double v) { return MultiPoly::constant(1, v); }

DiffusionModel model_1d(double b, double s) {
    PolyMatrix sig(1, 1, 1);
    sig(0, 0) = c1(s);
    return DiffusionModel(PolyVectorField({c1(b)}), sig);
}

DiffusionModel degenerate_square() {
    PolyMatrix sig(2, 1, 2);
    sig(1, 0) = MultiPoly::constant(2, std::sqrt(2.0));
    return DiffusionModel(PolyVectorField({MultiPoly::monomial({0, 2}, -1.0), MultiPoly(2)}), sig);
}

SimConfig cfg(double dt, double horizon, std::uint64_t seed = 11) {
    SimConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = seed;
    return c;
}

bool on_open_right_edge(const std::vector<double>& p) { return p[0] >= 1.0 && std::abs(p[1]) < 1.0; }

} // namespace

TEST_CASE("step_em") {
    const double z[] = {0.7};
    CHECK(step_em(model_1d(0.0, 0.0), std::vector<double>{0.3}, 0.1, z)[0] == 0.3);
    CHECK(step_em(model_1d(1.0, 0.0), std::vector<double>{0.0}, 0.1, z)[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK_THROWS(step_em(model_1d(1.0, 0.0), std::vector<double>{0.0, 1.0}, 0.1, z));
}

TEST_CASE("step_em: Brownian increments have variance n dt") {
    const auto bm = model_1d(0.0, 1.0);
    const std::size_t n_paths = 100000, n_steps = 10;
    const double dt = 0.01;
    double s = 0.0, ss = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        PathStream st(5, p);
        std::vector<double> x{0.0};
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double z = st.normal();
            x = step_em(bm, x, dt, std::span(&z, 1));
        }
        s += x[0];
        ss += x[0] * x[0];
    }
    const double n = static_cast<double>(n_paths);
    const double var = (ss - s * s / n) / (n - 1);
    const double target = n_steps * dt;
    CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("simulate_stopped: outward deterministic drift from the boundary") {
    const auto m = model_1d(1.0, 0.0);
    const auto U = Domain::box({0.0}, {1.0});
    PathStream st(1, 0);
    const auto rec = simulate_stopped(m, U, std::vector<double>{1.0}, cfg(0.01, 1.0), st);
    CHECK(rec.kind == ExitKind::exited_closure);
    CHECK(rec.boundary_start);
    REQUIRE(rec.exit_time.has_value());
    CHECK(*rec.exit_time >= 0.0);
    CHECK(*rec.exit_time <= 0.01);
    CHECK(rec.first_exit_time() == 0.0);
}

TEST_CASE("simulate_batch: BM on (0,1) is essentially never censored at horizon 100") {
    const auto b = simulate_batch(model_1d(0.0, 1.0), Domain::box({0.0}, {1.0}), std::vector<double>{0.5},
                                  cfg(1e-3, 100.0), 10000);
    CHECK(b.censored_fraction() < 1e-6);
    for (const auto& r : b.records) {
        REQUIRE(r.exit_point.has_value());
        CHECK(((*r.exit_point)[0] == 0.0 || (*r.exit_point)[0] == 1.0));
    }
}

TEST_CASE("degenerate square: interior starts never exit through the right edge") {
    const auto m = degenerate_square();
    const auto U = Domain::box({-1.0, -1.0}, {1.0, 1.0});
    std::size_t right = 0, total = 0;
    const std::vector<std::vector<double>> starts{{0.0, 0.0}, {0.9, 0.0}, {0.99, 0.5}};
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const auto b = simulate_batch(m, U, starts[k], cfg(1e-3, 50.0, 100 + k), 3334);
        for (const auto& r : b.records) {
            if (r.exit_point && on_open_right_edge(*r.exit_point)) ++right;
            ++total;
        }
    }
    CHECK(total >= 10000);
    CHECK(right == 0);
}

TEST_CASE("exit_time_triple") {
    SUBCASE("interior start: tau = tau0 <= tau-bar") {
        const auto m = model_1d(0.3, 1.0);
        const auto U = Domain::box({0.0}, {1.0});
        for (std::uint64_t i = 0; i < 500; ++i) {
            PathStream st(3, i);
            const auto t = exit_time_triple(m, U, std::vector<double>{0.4}, cfg(1e-3, 50.0), st);
            CHECK_FALSE(t.boundary_start);
            REQUIRE(t.tau.has_value());
            CHECK(t.tau == t.tau0);
            REQUIRE(t.tau_bar.has_value());
            CHECK(*t.tau <= *t.tau_bar);
        }
    }
    SUBCASE("BM from the endpoint 0 leaves the closure within one step") {
        const auto m = model_1d(0.0, 1.0);
        const auto U = Domain::box({0.0}, {1.0});
        std::size_t quick = 0;
        const std::size_t n = 2000;
        for (std::uint64_t i = 0; i < n; ++i) {
            PathStream st(4, i);
            const auto t = exit_time_triple(m, U, std::vector<double>{0.0}, cfg(1e-3, 1.0), st);
            CHECK(t.tau0 == 0.0);
            if (t.tau_bar && *t.tau_bar <= 1e-3) ++quick;
        }
        CHECK(static_cast<double>(quick) / n > 0.99);
    }
    SUBCASE("degenerate square from (1,0): the closure is never left immediately") {
        const auto m = degenerate_square();
        const auto U = Domain::box({-1.0, -1.0}, {1.0, 1.0});
        double min_bar = 1e300;
        for (std::uint64_t i = 0; i < 10000; ++i) {
            PathStream st(6, i);
            const auto t = exit_time_triple(m, U, std::vector<double>{1.0, 0.0}, cfg(1e-3, 20.0), st);
            CHECK(t.boundary_start);
            if (t.tau_bar) min_bar = std::min(min_bar, *t.tau_bar);
        }
        CHECK(min_bar > 0.01);
    }
}

TEST_CASE("simulate_batch: results do not depend on the thread count") {
    const auto m = degenerate_square();
    const auto U = Domain::box({-1.0, -1.0}, {1.0, 1.0});
    auto c = cfg(1e-3, 5.0);
    const auto one = batch_to_csv(simulate_batch(m, U, std::vector<double>{0.2, 0.1}, c, 600), 2);
    c.threads = 4;
    const auto four = batch_to_csv(simulate_batch(m, U, std::vector<double>{0.2, 0.1}, c, 600), 2);
    CHECK(one == four);
}

TEST_CASE("simulate_batch: stream offsets select the same paths") {
    const auto m = model_1d(0.0, 1.0);
    const auto U = Domain::box({0.0}, {1.0});
    const auto all = simulate_batch(m, U, std::vector<double>{0.5}, cfg(1e-3, 10.0), 20);
    const auto tail = simulate_batch(m, U, std::vector<double>{0.5}, cfg(1e-3, 10.0), 10, 10);
    for (std::size_t k = 0; k < 10; ++k) CHECK(all.records[10 + k].exit_time == tail.records[k].exit_time);
}

TEST_CASE("simulate_batch: a longer horizon only extends paths") {
    const auto m = model_1d(0.0, 1.0);
    const auto U = Domain::box({0.0}, {1.0});
    const auto short_h = simulate_batch(m, U, std::vector<double>{0.5}, cfg(1e-3, 0.2), 500);
    const auto long_h = simulate_batch(m, U, std::vector<double>{0.5}, cfg(1e-3, 5.0), 500);
    for (std::size_t k = 0; k < 500; ++k) {
        if (!short_h.records[k].censored()) CHECK(short_h.records[k].exit_time == long_h.records[k].exit_time);
        else CHECK(*long_h.records[k].exit_time > 0.2);
    }
}

TEST_CASE("simulate_batch: exterior start is a usage error") {
    CHECK_THROWS_AS(simulate_batch(model_1d(0.0, 1.0), Domain::box({0.0}, {1.0}), std::vector<double>{2.0},
                                   cfg(1e-3, 1.0), 10),
                    UsageError);
}

TEST_CASE("bridge correction removes most of the exit-time bias") {
    const auto m = model_1d(0.0, 1.0);
    const auto U = Domain::box({0.0}, {1.0});
    auto c = cfg(1e-2, 50.0);
    double with = 0.0, without = 0.0;
    const std::size_t n = 20000;
    for (const auto& r : simulate_batch(m, U, std::vector<double>{0.5}, c, n).records) with += *r.exit_time;
    c.bridge_correction = false;
    for (const auto& r : simulate_batch(m, U, std::vector<double>{0.5}, c, n).records) without += *r.exit_time;
    with /= n;
    without /= n;
    const double exact = oracle::bm_mean_exit(0.5);
    CHECK(std::abs(with - exact) < 0.01);
    CHECK(without - exact > 0.03);
}
