#include "stochar/error.hpp"
#include "stochar/hormander.hpp"
#include "stochar/polynomial.hpp"

#include <doctest.h>

#include <random>

using namespace stochar;

namespace {

MultiPoly mono(std::initializer_list<std::uint32_t> e, double c) { return MultiPoly::monomial(Exponents(e), c); }

PolyVectorField field(std::vector<MultiPoly> c) { return PolyVectorField(std::move(c)); }

// X1 = d/dx2, X0 = (-x2^2, 0)
HormanderForm degenerate_square() {
    return {field({mono({0, 2}, -1.0), MultiPoly(2)}), {PolyVectorField::coordinate(2, 1)}};
}

PolyVectorField random_field(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_int_distribution<int> coeff(-3, 3), deg(0, 3), nterms(0, 4);
    std::vector<MultiPoly> comps;
    for (std::size_t i = 0; i < dim; ++i) {
        MultiPoly p(dim);
        for (int t = nterms(rng); t > 0; --t) {
            Exponents e(dim);
            int budget = deg(rng);
            for (std::size_t k = 0; k < dim && budget > 0; ++k) {
                std::uniform_int_distribution<int> take(0, budget);
                e[k] = static_cast<std::uint32_t>(take(rng));
                budget -= static_cast<int>(e[k]);
            }
            p.add_term(e, coeff(rng));
        }
        comps.push_back(p);
    }
    return PolyVectorField(std::move(comps));
}

} // namespace

TEST_CASE("differentiate: power rule, constants, mixed monomials") {
    CHECK(differentiate(mono({0, 2}, 1.0), 1) == mono({0, 1}, 2.0));
    CHECK(differentiate(MultiPoly::constant(2, 5.0), 0).is_zero());
    CHECK(differentiate(mono({2, 1}, 1.0), 0) == mono({1, 1}, 2.0));
    CHECK_THROWS_AS(differentiate(mono({1}, 1.0), 1), DimensionError);
}

TEST_CASE("polynomial arithmetic drops cancelled terms") {
    MultiPoly p = mono({1, 0}, 2.0) + mono({0, 1}, 1.0);
    p -= mono({1, 0}, 2.0);
    CHECK(p == mono({0, 1}, 1.0));
    CHECK(p.terms().size() == 1);
    const double x[] = {3.0, -2.0};
    CHECK((p * p)(x) == doctest::Approx(4.0));
}

TEST_CASE("lie_bracket: golden double bracket of the degenerate square") {
    const auto f = degenerate_square();
    const auto& X1 = f.noise[0];
    const auto inner = lie_bracket(X1, f.drift);
    CHECK(inner == field({mono({0, 1}, -2.0), MultiPoly(2)}));
    CHECK(lie_bracket(X1, inner) == field({MultiPoly::constant(2, -2.0), MultiPoly(2)}));
}

TEST_CASE("lie_bracket: [X,X] = 0 and a Kolmogorov-type bracket") {
    const auto X = field({mono({1, 1}, 3.0), mono({2, 0}, -1.0)});
    CHECK(lie_bracket(X, X).is_zero());
    const auto d2 = PolyVectorField::coordinate(2, 1);
    const auto x2d1 = field({mono({0, 1}, 1.0), MultiPoly(2)});
    CHECK(lie_bracket(d2, x2d1) == PolyVectorField::coordinate(2, 0));
    CHECK_THROWS_AS(lie_bracket(d2, PolyVectorField::coordinate(3, 0)), DimensionError);
}

TEST_CASE("lie_bracket: antisymmetry and Jacobi on random integer fields") {
    std::mt19937_64 rng(12345);
    for (int trial = 0; trial < 100; ++trial) {
        const auto X = random_field(rng, 3), Y = random_field(rng, 3), Z = random_field(rng, 3);
        CHECK(lie_bracket(X, Y) + lie_bracket(Y, X) == PolyVectorField(3));
        const auto jac = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) +
                         lie_bracket(Z, lie_bracket(X, Y));
        CHECK(jac.is_zero());
    }
}

TEST_CASE("to_hormander_form") {
    SUBCASE("constant sigma: no correction") {
        PolyVectorField b = field({mono({1, 0}, -1.0), mono({0, 3}, 2.0)});
        PolyMatrix s(2, 1, 2);
        s(1, 0) = MultiPoly::constant(2, 0.7);
        const auto f = to_hormander_form(b, s);
        CHECK(f.drift == b);
        REQUIRE(f.noise.size() == 1);
        CHECK(f.noise[0] == field({MultiPoly(2), MultiPoly::constant(2, 0.7)}));
    }
    SUBCASE("degenerate square") {
        PolyVectorField b = field({mono({0, 2}, -1.0), MultiPoly(2)});
        PolyMatrix s(2, 1, 2);
        s(1, 0) = MultiPoly::constant(2, std::sqrt(2.0));
        const auto f = to_hormander_form(b, s);
        CHECK(f.drift == b);
        CHECK(f.noise[0] == field({MultiPoly(2), MultiPoly::constant(2, std::sqrt(2.0))}));
    }
    SUBCASE("multiplicative 1D noise sigma = x") {
        PolyVectorField b = field({MultiPoly(1)});
        PolyMatrix s(1, 1, 1);
        s(0, 0) = mono({1}, 1.0);
        const auto f = to_hormander_form(b, s);
        CHECK(f.noise[0] == field({mono({1}, 1.0)}));
        CHECK(f.drift == field({mono({1}, -0.5)}));
    }
}

TEST_CASE("apply_generator and apply_hormander agree") {
    SUBCASE("w constant") {
        PolyMatrix a(1, 1, 1);
        a(0, 0) = MultiPoly::constant(1, 1.0);
        CHECK(apply_generator(field({mono({1}, 4.0)}), a, MultiPoly::constant(1, 3.0)).is_zero());
    }
    SUBCASE("BM, w = x^2") {
        PolyMatrix a(1, 1, 1);
        a(0, 0) = MultiPoly::constant(1, 1.0);
        CHECK(apply_generator(field({MultiPoly(1)}), a, mono({2}, 1.0)) == MultiPoly::constant(1, 1.0));
    }
    SUBCASE("degenerate square, w = x1") {
        PolyVectorField b = field({mono({0, 2}, -1.0), MultiPoly(2)});
        PolyMatrix s(2, 1, 2);
        s(1, 0) = MultiPoly::constant(2, std::sqrt(2.0));
        const auto Lw = apply_generator(b, s.times_transpose(), mono({1, 0}, 1.0));
        CHECK(Lw == mono({0, 2}, -1.0));
    }
    SUBCASE("multiplicative noise: both forms give the same operator") {
        PolyVectorField b = field({mono({2}, 1.0)});
        PolyMatrix s(1, 1, 1);
        s(0, 0) = mono({1}, 1.0) + MultiPoly::constant(1, 2.0);
        const auto w = mono({3}, 1.0) + mono({1}, -2.0);
        const auto g = apply_generator(b, s.times_transpose(), w);
        const auto h = apply_hormander(to_hormander_form(b, s), w);
        const double xs[] = {-1.3, 0.0, 0.4, 2.5};
        for (double x : xs) CHECK(h(std::span(&x, 1)) == doctest::Approx(g(std::span(&x, 1))).epsilon(1e-12));
    }
}

TEST_CASE("check_hormander") {
    SUBCASE("degenerate square spans at depth 2 everywhere") {
        const auto rep = check_hormander(degenerate_square(), {{0, 0}, {1, 1}, {-1, 0.5}}, 2);
        CHECK(rep.spans_everywhere);
        for (const auto& p : rep.points) {
            CHECK(p.rank == 2);
            CHECK(p.rank <= p.required);
        }
        CHECK(rep.points[0].depth_reached == 2);
        bool found = false;
        for (const auto& g : rep.fields) {
            if (g.depth == 2 && (g.field == field({MultiPoly::constant(2, 2.0), MultiPoly(2)}) ||
                                 g.field == field({MultiPoly::constant(2, -2.0), MultiPoly(2)}))) {
                found = true;
            }
        }
        CHECK(found);
        for (const auto& g : rep.fields) {
            if (g.depth == 0) CHECK(g.field == PolyVectorField::coordinate(2, 1));
        }
    }
    SUBCASE("no noise fields: rank 0 at any depth") {
        HormanderForm f{field({MultiPoly::constant(2, 1.0), mono({1, 0}, 1.0)}), {}};
        const auto rep = check_hormander(f, {{0, 0}, {0.3, -0.2}}, 10);
        CHECK_FALSE(rep.spans_everywhere);
        for (const auto& p : rep.points) CHECK(p.rank == 0);
    }
    SUBCASE("elliptic coordinate fields span at depth 0") {
        HormanderForm f{PolyVectorField(2), {PolyVectorField::coordinate(2, 0), PolyVectorField::coordinate(2, 1)}};
        const auto rep = check_hormander(f, {{0.1, 0.2}}, 3);
        CHECK(rep.spans_everywhere);
        CHECK(rep.points[0].depth_reached == 0);
    }
    SUBCASE("full mode admits the drift") {
        HormanderForm f{PolyVectorField::coordinate(2, 0), {PolyVectorField::coordinate(2, 1)}};
        CHECK_FALSE(check_hormander(f, {{0, 0}}, 0).spans_everywhere);
        CHECK(check_hormander(f, {{0, 0}}, 0, 1e-8, SpanMode::full).spans_everywhere);
    }
}
