// Acceptance runner: one PASS/FAIL line per criterion. Tolerances are fixed
// here; criterion 11 reruns 1-10 at 4 and 16 threads and compares CSV bytes.

#include "stochar/boundary.hpp"
#include "stochar/ergodic.hpp"
#include "stochar/error.hpp"
#include "stochar/estimate.hpp"
#include "stochar/hormander.hpp"
#include "stochar/io.hpp"
#include "stochar/polynomial.hpp"
#include "stochar/simulate.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace stochar;
using io::fmt17;

namespace {

// ---------------------------------------------------------------- pinned tolerances
constexpr double kC1MaxSeconds = 1.0;
constexpr double kC2AbsFloor = 0.005;
constexpr double kC2MaxSeconds = 60.0;
constexpr double kC3MaxSeconds = 60.0;
constexpr double kSigmas = 3.0;
constexpr double kC4SharedPathTol = 1e-12;
constexpr double kC5ResidualBound = 0.15;
constexpr double kC5MaxSeconds = 600.0;
constexpr double kC9L1Bound = 0.1;
constexpr double kC9MaxSeconds = 600.0;
constexpr double kC10MaxSecondsEach = 300.0;

struct Outcome {
    bool pass = false;
    std::string detail;
    std::string csv; // every number the run produced, for criterion 11
    double seconds = 0.0;
};

using Criterion = std::function<Outcome(std::size_t threads)>;

MultiPoly c1(double v) { return MultiPoly::constant(1, v); }

DiffusionModel model_1d(MultiPoly b, double s) {
    PolyMatrix sig(1, 1, 1);
    sig(0, 0) = c1(s);
    return DiffusionModel(PolyVectorField({std::move(b)}), sig);
}

DiffusionModel bm() { return model_1d(c1(0.0), 1.0); }
DiffusionModel ou() { return model_1d(MultiPoly::monomial({1}, -1.0), 1.0); }

DiffusionModel degenerate_square() {
    PolyMatrix sig(2, 1, 2);
    sig(1, 0) = MultiPoly::constant(2, std::sqrt(2.0));
    return DiffusionModel(PolyVectorField({MultiPoly::monomial({0, 2}, -1.0), MultiPoly(2)}), sig);
}

const Domain unit = Domain::box({0.0}, {1.0});
const Domain square = Domain::box({-1.0, -1.0}, {1.0, 1.0});

SimConfig cfg(double dt, double horizon, std::uint64_t seed, std::size_t threads) {
    SimConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = seed;
    c.threads = threads;
    return c;
}

std::string est_csv(const MCEstimate& e) {
    return fmt17(e.mean) + "," + fmt17(e.std_error) + "," + std::to_string(e.n) + "," + fmt17(e.censored_fraction) +
           "\n";
}

std::string num(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criteria

Outcome c1_brackets(std::size_t) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    const PolyVectorField X1 = PolyVectorField::coordinate(2, 1);
    const PolyVectorField X0({MultiPoly::monomial({0, 2}, -1.0), MultiPoly(2)});
    const PolyVectorField expected({MultiPoly::constant(2, -2.0), MultiPoly(2)});
    const auto bracket = lie_bracket(X1, lie_bracket(X1, X0));
    const bool exact = bracket == expected;

    const HormanderForm form{X0, {X1}};
    const auto rep = check_hormander(form, {{0.0, 0.0}, {1.0, 1.0}, {-1.0, 0.5}, {0.3, -0.7}}, 2);
    bool depth2 = rep.spans_everywhere;
    for (const auto& p : rep.points) depth2 = depth2 && p.rank == 2 && p.depth_reached <= 2;
    depth2 = depth2 && rep.points.front().depth_reached == 2;
    o.seconds = seconds_since(t0);
    o.pass = exact && depth2 && o.seconds < kC1MaxSeconds;
    o.detail = "[X1,[X1,X0]] = " + bracket.to_string() + (exact ? " (exact)" : " (MISMATCH)") +
               ", span depth at origin " + std::to_string(rep.points.front().depth_reached);
    o.csv = bracket.to_string() + "\n" + rep.to_table();
    return o;
}

Outcome c2_exit_time(std::size_t threads) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    const auto e = estimate_exit_moment(bm(), unit, std::vector<double>{0.5}, 1, 100000, cfg(1e-3, 100.0, 2, threads));
    o.seconds = seconds_since(t0);
    const double target = oracle::bm_mean_exit(0.5);
    const double err = std::abs(target - e.mean);
    const double tol = std::max(kC2AbsFloor, kSigmas * e.std_error);
    o.pass = err < tol && o.seconds < kC2MaxSeconds;
    o.detail = "E tau = " + num(e.mean) + " +- " + num(e.std_error, 3) + ", |0.25 - est| = " + num(err, 3) +
               " < " + num(tol, 3);
    o.csv = est_csv(e);
    return o;
}

Outcome c3_harmonic(std::size_t threads) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    o.pass = true;
    const auto right = ScalarFn::indicator({1.0}, 1.0);
    for (double x : {0.2, 0.5, 0.8}) {
        const auto e = estimate_u_stoc(bm(), unit, ScalarFn::constant(1, 0.0), right, std::vector<double>{x}, 100000,
                                       cfg(1e-3, 100.0, 3, threads));
        const bool ok = std::abs(e.mean - x) <= kSigmas * e.std_error;
        o.pass = o.pass && ok;
        o.detail += "x=" + num(x, 2) + ": " + num(e.mean) + (ok ? "" : " (off)") + "; ";
        o.csv += est_csv(e);
    }
    o.seconds = seconds_since(t0);
    o.pass = o.pass && o.seconds < kC3MaxSeconds;
    return o;
}

Outcome c4_laplace(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = cfg(1e-3, 100.0, 4, threads);
    const std::vector<double> x{0.5};
    const auto em = estimate_exp_moment(bm(), unit, x, -2.0, 100000, c);
    const auto g = estimate_green(bm(), unit, 2.0, ScalarFn::constant(1, 1.0), x, 100000, c);
    const double target = 1.0 / std::cosh(1.0);
    const bool laplace = std::abs(em.mean - target) <= kSigmas * em.std_error;
    const double gap = std::abs(g.value.mean - (1.0 - em.mean) / 2.0);
    const bool shared = gap <= kC4SharedPathTol;
    o.seconds = seconds_since(t0);
    o.pass = laplace && shared;
    o.detail = "E e^{-2 tau} = " + num(em.mean) + " +- " + num(em.std_error, 3) + " vs " + num(target) +
               "; |G_2 1 - (1 - E)/2| = " + num(gap, 3);
    o.csv = est_csv(em) + est_csv(g.value);
    return o;
}

Outcome c5_pde_residual(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> grid;
    for (int k = 2; k <= 8; ++k) grid.push_back({k / 10.0});
    const auto rep = pde_residual_grid(bm(), unit, ScalarFn::constant(1, 1.0), ScalarFn::constant(1, 0.0), grid, 0.05,
                                       1000000, cfg(2e-3, 100.0, 5, threads));
    o.seconds = seconds_since(t0);
    double worst = 0.0;
    for (const auto& p : rep.points) worst = std::max(worst, std::abs(p.residual.mean));
    o.pass = worst < kC5ResidualBound && o.seconds < kC5MaxSeconds;
    o.detail = "max |1/2 u'' + 1| = " + num(worst, 4) + " over " + std::to_string(rep.points.size()) + " points";
    o.csv = rep.to_csv();
    return o;
}

Outcome c6_regularity(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const double hs[] = {1e-3, 3e-3, 1e-2};
    const auto reg = probe_regularity(bm(), unit, std::vector<double>{0.0}, hs, 10000, cfg(1e-4, 1.0, 6, threads));
    const auto irr =
        probe_regularity(degenerate_square(), square, std::vector<double>{1.0, 0.0}, hs, 10000, cfg(1e-4, 1.0, 7, threads));

    // Exits through the open right edge {1} x (-1, 1), from interior starts.
    std::size_t right = 0, total = 0;
    const std::vector<std::vector<double>> starts{{0.0, 0.0}, {0.9, 0.0}, {0.99, -0.5}, {0.5, 0.9}};
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const auto b = simulate_batch(degenerate_square(), square, starts[k], cfg(1e-3, 50.0, 60 + k, threads), 2500);
        for (const auto& r : b.records) {
            ++total;
            if (r.exit_point && (*r.exit_point)[0] >= 1.0 && std::abs((*r.exit_point)[1]) < 1.0) ++right;
        }
    }
    o.seconds = seconds_since(t0);
    o.pass = reg.verdict == RegularityVerdict::regular_evidence &&
             irr.verdict == RegularityVerdict::irregular_evidence && right == 0 && total >= 10000;
    o.detail = std::string("BM at 0: ") + to_string(reg.verdict) + "; square at (1,0): " + to_string(irr.verdict) +
               "; right-edge exits " + std::to_string(right) + "/" + std::to_string(total);
    o.csv = reg.to_csv() + irr.to_csv() + std::to_string(right) + "," + std::to_string(total) + "\n";
    return o;
}

Outcome c7_niceness(std::size_t) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> x0{0.0};
    const auto w = construct_sphere_witness(bm(), unit, x0, std::vector<double>{-1.0}, 0.1, 200.0);
    const auto cert = certify_nice_point(bm(), unit, x0, w, 0.05, 101);
    bool failed_as_expected = false;
    double form = -1.0;
    try {
        construct_sphere_witness(degenerate_square(), square, std::vector<double>{1.0, 0.0},
                                 std::vector<double>{1.0, 0.0}, 0.1, 200.0);
    } catch (const ConditionError& e) {
        failed_as_expected = true;
        form = e.value();
    }
    o.seconds = seconds_since(t0);
    o.pass = cert.valid && cert.max_Lw < 0.0 && failed_as_expected && form == 0.0;
    o.detail = "BM witness valid=" + std::string(cert.valid ? "yes" : "no") + ", Lw margin " + num(cert.max_Lw, 4) +
               "; square normal form " + num(form, 3) + (failed_as_expected ? " (rejected)" : " (NOT rejected)");
    o.csv = cert.to_json().dump() + "\n" + fmt17(form) + "\n";
    return o;
}

Outcome c8_lyapunov(std::size_t) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const MultiPoly w = c1(1.0) + MultiPoly::monomial({2}, 1.0);
    const auto good = certify_nonexplosive(bm(), w, Exhaustion::balls(1), 1.0, 1.0, 6, 61);
    const MultiPoly expected = c1(-1.0) + MultiPoly::monomial({2}, -1.0);
    const auto bad =
        certify_nonexplosive(model_1d(MultiPoly::monomial({3}, 1.0), 1.0), w, Exhaustion::balls(1), 1.0, 1.0, 6, 61);
    o.seconds = seconds_since(t0);
    o.pass = good.valid && good.residual == expected && !bad.valid && bad.witness.has_value();
    o.detail = "BM residual " + good.residual.to_string() + (good.valid ? " valid" : " INVALID") + "; x^3 drift " +
               (bad.valid ? "VALID" : "invalid") +
               (bad.witness ? ", witness x=" + num((*bad.witness)[0], 4) : std::string(", no witness"));
    o.csv = good.to_json().dump() + "\n" + bad.to_json().dump() + "\n";
    return o;
}

Outcome c9_invariant_measure(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const Grid grid({-3.0}, {3.0}, {50});
    const auto p = oracle::normal_cells(-3.0, 3.0, 50, 0.5);
    const double outside = 1.0 - oracle::normal_mass(-3.0, 3.0, 0.5);
    const auto a = run_cycles(ou(), CycleConfig{{0.0}, 0.5, 1.0}, 10000, cfg(1e-2, 1000.0, 9, threads), grid);
    const auto b = run_cycles(ou(), CycleConfig{{0.0}, 0.25, 1.5}, 10000, cfg(1e-2, 1000.0, 10, threads), grid);
    const auto ma = estimate_invariant_measure(a, 10);
    const auto mb = estimate_invariant_measure(b, 10);
    const double la = l1_distance(ma, p, outside), lb = l1_distance(mb, p, outside), lab = l1_distance(ma, mb);
    o.seconds = seconds_since(t0);
    o.pass = la < kC9L1Bound && lb < kC9L1Bound && lab < kC9L1Bound && o.seconds < kC9MaxSeconds;
    o.detail = "L1 to N(0,1/2): " + num(la, 3) + " and " + num(lb, 3) + "; between configs " + num(lab, 3) + " (" +
               std::to_string(ma.cycles_used) + "+" + std::to_string(mb.cycles_used) + " cycles)";
    o.csv = ma.to_csv() + mb.to_csv();
    return o;
}

Outcome c10_recurrence(std::size_t threads) {
    Outcome o;
    const std::vector<double> c{0.0};
    const std::vector<std::vector<double>> start{{2.0}};
    const double d = 1.0; // start 2, ball radius 1
    double worst = 0.0;

    auto t0 = std::chrono::steady_clock::now();
    const double h_long[] = {10.0, 100.0, 1000.0};
    const auto pos = classify_recurrence(ou(), c, 1.0, start, h_long, 4000, cfg(1e-2, 1000.0, 11, threads));
    worst = std::max(worst, seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const double h_tr[] = {10.0, 30.0, 100.0};
    const auto tr =
        classify_recurrence(model_1d(c1(1.0), 1.0), c, 1.0, start, h_tr, 10000, cfg(1e-2, 100.0, 12, threads));
    worst = std::max(worst, seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const auto nul = classify_recurrence(bm(), c, 1.0, start, h_long, 4000, cfg(1e-2, 1000.0, 13, threads));
    worst = std::max(worst, seconds_since(t0));

    const auto& plateau = tr.starts[0].rows.back().hit_probability;
    const double target = oracle::drifted_hit_probability(1.0, d);
    const bool near = std::abs(plateau.mean - target) <= kSigmas * plateau.std_error;
    o.seconds = worst;
    o.pass = pos.verdict == RecurrenceVerdict::positive_recurrent_evidence &&
             tr.verdict == RecurrenceVerdict::transient_evidence && near &&
             nul.verdict == RecurrenceVerdict::null_recurrent_evidence && worst < kC10MaxSecondsEach;
    o.detail = std::string("OU ") + to_string(pos.verdict) + "; drift 1 " + to_string(tr.verdict) + " plateau " +
               num(plateau.mean, 4) + " +- " + num(plateau.std_error, 2) + " vs " + num(target, 4) + "; BM " +
               to_string(nul.verdict) + "; slowest run " + num(worst, 3) + " s";
    o.csv = pos.to_csv() + tr.to_csv() + nul.to_csv();
    return o;
}

PolyVectorField random_field(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_int_distribution<int> coeff(-5, 5), nterms(0, 4), deg(0, 3);
    std::vector<MultiPoly> comps;
    for (std::size_t i = 0; i < dim; ++i) {
        MultiPoly p(dim);
        for (int t = nterms(rng); t > 0; --t) {
            Exponents e(dim, 0);
            for (int left = deg(rng); left > 0; --left) ++e[rng() % dim];
            p.add_term(e, coeff(rng));
        }
        comps.push_back(std::move(p));
    }
    return PolyVectorField(std::move(comps));
}

Outcome c12_properties(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();

    std::mt19937_64 rng(2024);
    int algebra_fail = 0;
    for (int k = 0; k < 100; ++k) {
        const auto X = random_field(rng, 3), Y = random_field(rng, 3), Z = random_field(rng, 3);
        if (!(lie_bracket(X, Y) + lie_bracket(Y, X)).is_zero()) ++algebra_fail;
        const auto jac = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) +
                         lie_bracket(Z, lie_bracket(X, Y));
        if (!jac.is_zero()) ++algebra_fail;
    }

    const Domain K = Domain::box({-10.0}, {10.0});
    int dynkin_fail = 0;
    std::string dyn;
    const MultiPoly phis[] = {c1(1.0), MultiPoly::monomial({1}, 1.0), MultiPoly::monomial({2}, 1.0)};
    for (std::size_t k = 0; k < 3; ++k) {
        const auto r = dynkin_residual(bm(), phis[k], std::vector<double>{0.0}, 1.0, K, 20000,
                                       cfg(1e-3, 10.0, 120 + k, threads));
        if (std::abs(r.mean) > kSigmas * r.std_error) ++dynkin_fail;
        dyn += num(r.mean, 3) + " ";
        o.csv += est_csv(r);
    }

    int green_fail = 0;
    const auto u = ScalarFn::polynomial(MultiPoly::monomial({1}, 1.0));
    const double beta = 2.0;
    for (double x : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const auto g = estimate_green(bm(), unit, beta, u, std::vector<double>{x}, 20000, cfg(1e-3, 100.0, 130, threads));
        if (beta * g.value.mean > x + kSigmas * beta * g.value.std_error) ++green_fail;
        o.csv += est_csv(g.value);
    }

    int survival_fail = 0;
    const auto batch = simulate_batch(bm(), unit, std::vector<double>{0.5}, cfg(1e-3, 100.0, 140, threads), 20000);
    std::vector<double> ts;
    for (int k = 0; k <= 400; ++k) ts.push_back(0.005 * k);
    const auto curve = survival_curve(batch, ts);
    for (std::size_t k = 1; k < curve.size(); ++k) {
        if (curve[k].mean > curve[k - 1].mean) ++survival_fail;
        o.csv += fmt17(curve[k].mean) + "\n";
    }

    o.seconds = seconds_since(t0);
    o.pass = algebra_fail == 0 && dynkin_fail == 0 && green_fail == 0 && survival_fail == 0;
    o.detail = "bracket identities failed " + std::to_string(algebra_fail) + "/200; Dynkin residuals " + dyn +
               "(fail " + std::to_string(dynkin_fail) + "); beta G u <= u fail " + std::to_string(green_fail) +
               "/5; survival increases " + std::to_string(survival_fail);
    return o;
}

void report(int id, const std::string& name, const Outcome& o) {
    std::printf("[%s] C%-2d %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                o.seconds);
    std::fflush(stdout);
}

} // namespace

int main() {
    struct Entry {
        int id;
        std::string name;
        Criterion run;
    };
    const std::vector<Entry> entries{
        {1, "bracket golden test", c1_brackets},
        {2, "exit-time oracle", c2_exit_time},
        {3, "harmonic measure oracle", c3_harmonic},
        {4, "Laplace-transform consistency", c4_laplace},
        {5, "PDE residual", c5_pde_residual},
        {6, "boundary classification", c6_regularity},
        {7, "niceness certificate", c7_niceness},
        {8, "Lyapunov certificate", c8_lyapunov},
        {9, "invariant measure", c9_invariant_measure},
        {10, "recurrence taxonomy", c10_recurrence},
    };

    bool all = true;
    std::vector<std::string> reference;
    for (const auto& e : entries) {
        Outcome o;
        try {
            o = e.run(1);
        } catch (const std::exception& ex) {
            o.detail = std::string("threw: ") + ex.what();
        }
        report(e.id, e.name, o);
        all = all && o.pass;
        reference.push_back(o.csv);
    }

    {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        o.pass = true;
        std::string mismatches;
        for (std::size_t threads : {std::size_t{4}, std::size_t{16}}) {
            for (std::size_t k = 0; k < entries.size(); ++k) {
                std::string csv;
                try {
                    csv = entries[k].run(threads).csv;
                } catch (const std::exception& ex) {
                    csv = std::string("threw: ") + ex.what();
                }
                if (csv != reference[k] || csv.empty()) {
                    o.pass = false;
                    mismatches += " C" + std::to_string(entries[k].id) + "@" + std::to_string(threads);
                }
            }
        }
        o.seconds = seconds_since(t0);
        o.detail = o.pass ? "runs 1-10 byte-identical at 1/4/16 threads" : "mismatch:" + mismatches;
        report(11, "determinism", o);
        all = all && o.pass;
    }

    Outcome o12;
    try {
        o12 = c12_properties(1);
    } catch (const std::exception& ex) {
        o12.detail = std::string("threw: ") + ex.what();
    }
    report(12, "property suites", o12);
    all = all && o12.pass;

    std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
    return all ? 0 : 1;
}
