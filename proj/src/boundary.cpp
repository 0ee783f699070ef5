#include "stochar/boundary.hpp"

#include "stochar/error.hpp"
#include "stochar/io.hpp"
#include "stochar/parallel.hpp"
#include "stochar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stochar {

namespace {

// Streams for auxiliary sampling live far above any path index.
constexpr std::uint64_t kAuxStream = 0xB0DA000000000000ull;

void require_dim(const DiffusionModel& model, const Domain& U, std::span<const double> x, const char* who) {
    if (x.size() != model.dim_state() || U.dim() != model.dim_state()) {
        throw DimensionError(std::string(who) + ": dimension mismatch");
    }
}

// Deterministic uniform draws from B_delta(center) n U.
std::vector<std::vector<double>> sample_near(const Domain& U, std::span<const double> center, double delta,
                                             std::size_t n, std::uint64_t seed, const char* who) {
    const std::size_t m = center.size();
    PathStream stream(seed, kAuxStream);
    std::vector<std::vector<double>> out;
    std::vector<double> y(m);
    for (std::size_t attempt = 0; attempt < 10000 * n && out.size() < n; ++attempt) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = stream.normal();
            norm += y[i] * y[i];
        }
        norm = std::sqrt(norm);
        const double r = delta * std::pow(stream.uniform(), 1.0 / static_cast<double>(m));
        for (std::size_t i = 0; i < m; ++i) y[i] = center[i] + r * y[i] / norm;
        if (U.contains(y)) out.push_back(y);
    }
    if (out.empty()) throw UsageError(std::string(who) + ": B_delta(x*) does not meet U");
    return out;
}

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

const char* to_string(RegularityVerdict v) noexcept {
    switch (v) {
    case RegularityVerdict::regular_evidence: return "regular-evidence";
    case RegularityVerdict::irregular_evidence: return "irregular-evidence";
    case RegularityVerdict::inconclusive: return "inconclusive";
    }
    return "?";
}

// -------------------------------------------------------------- regularity

nlohmann::json RegularityProbe::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < h_schedule.size(); ++i) {
        rows.push_back({{"h", h_schedule[i]}, {"estimate", estimates[i].to_json()}});
    }
    return {{"point", point},
            {"estimates", rows},
            {"verdict", to_string(verdict)},
            {"thresholds", {{"regular", upper_threshold}, {"irregular", lower_threshold}}}};
}

std::string RegularityProbe::to_csv() const {
    std::ostringstream os;
    os << "h,estimate,stderr\n";
    for (std::size_t i = 0; i < h_schedule.size(); ++i) {
        os << io::fmt17(h_schedule[i]) << ',' << io::fmt17(estimates[i].mean) << ','
           << io::fmt17(estimates[i].std_error) << '\n';
    }
    return os.str();
}

RegularityProbe probe_regularity(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                 std::span<const double> h_schedule, std::size_t n_paths, const SimConfig& cfg,
                                 double upper, double lower) {
    require_dim(model, U, x_star, "probe_regularity");
    if (U.membership(x_star) != Membership::boundary) throw UsageError("probe_regularity: x* is not a boundary point");
    if (h_schedule.empty()) throw UsageError("probe_regularity: empty h schedule");
    if (n_paths == 0) throw UsageError("probe_regularity: n_paths must be positive");
    if (!(lower < upper)) throw UsageError("probe_regularity: need lower < upper threshold");
    const auto [h_min, h_max] = std::minmax_element(h_schedule.begin(), h_schedule.end());
    if (!(*h_min >= 10.0 * cfg.dt)) {
        throw UsageError("probe_regularity: every h must be at least 10 dt (resolution guard)");
    }
    SimConfig c = cfg;
    c.horizon = *h_max;
    c.validate();

    std::vector<double> tau_bar(n_paths);
    parallel_for(n_paths, c.threads, [&](std::size_t i) {
        PathStream stream(c.seed, i);
        const ExitTimes t = exit_time_triple(model, U, x_star, c, stream);
        tau_bar[i] = t.tau_bar ? *t.tau_bar : std::numeric_limits<double>::infinity();
    });
    std::sort(tau_bar.begin(), tau_bar.end());

    RegularityProbe p;
    p.point.assign(x_star.begin(), x_star.end());
    p.h_schedule.assign(h_schedule.begin(), h_schedule.end());
    p.upper_threshold = upper;
    p.lower_threshold = lower;
    const double n = static_cast<double>(n_paths);
    for (double h : h_schedule) {
        const auto hits = static_cast<double>(std::upper_bound(tau_bar.begin(), tau_bar.end(), h) - tau_bar.begin());
        MCEstimate e;
        e.n = n_paths;
        e.mean = hits / n;
        e.std_error = n > 1 ? std::sqrt(e.mean * (1.0 - e.mean) / (n - 1.0)) : 0.0;
        p.estimates.push_back(e);
    }
    const auto i_min = static_cast<std::size_t>(h_min - h_schedule.begin());
    const auto i_max = static_cast<std::size_t>(h_max - h_schedule.begin());
    if (p.estimates[i_min].mean >= upper) {
        p.verdict = RegularityVerdict::regular_evidence;
    } else if (p.estimates[i_max].mean <= lower) {
        p.verdict = RegularityVerdict::irregular_evidence;
    }
    return p;
}

// ---------------------------------------------------------- sphere witness

double SphereWitness::value(std::span<const double> x) const {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        a += (x_prime[i] - x_star[i]) * (x_prime[i] - x_star[i]);
        b += (x_prime[i] - x[i]) * (x_prime[i] - x[i]);
    }
    return std::exp(-beta * a) - std::exp(-beta * b);
}

void SphereWitness::gradient(std::span<const double> x, std::span<double> out) const {
    double b = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) b += (x[i] - x_prime[i]) * (x[i] - x_prime[i]);
    const double e = std::exp(-beta * b);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * beta * (x[i] - x_prime[i]) * e;
}

void SphereWitness::hessian(std::span<const double> x, std::span<double> out) const {
    const std::size_t m = x.size();
    double b = 0.0;
    for (std::size_t i = 0; i < m; ++i) b += (x[i] - x_prime[i]) * (x[i] - x_prime[i]);
    const double e = std::exp(-beta * b);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double dij = i == j ? 2.0 * beta : 0.0;
            out[i * m + j] = e * (dij - 4.0 * beta * beta * (x[i] - x_prime[i]) * (x[j] - x_prime[j]));
        }
    }
}

double SphereWitness::generator(const DiffusionModel& model, std::span<const double> x) const {
    const std::size_t m = x.size();
    std::vector<double> bx(m), a(m * m), g(m), H(m * m);
    model.drift(x.data(), bx.data());
    model.diffusion(x.data(), a.data());
    gradient(x, g);
    hessian(x, H);
    double lw = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        lw += bx[i] * g[i];
        for (std::size_t j = 0; j < m; ++j) lw += 0.5 * a[i * m + j] * H[i * m + j];
    }
    return lw;
}

SphereWitness construct_sphere_witness(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                       std::span<const double> nu, double lambda, double beta) {
    require_dim(model, U, x_star, "construct_sphere_witness");
    if (nu.size() != x_star.size()) throw DimensionError("construct_sphere_witness: normal dimension mismatch");
    if (!(lambda > 0.0) || !(beta > 0.0)) throw UsageError("construct_sphere_witness: lambda and beta must be positive");
    if (U.membership(x_star) != Membership::boundary) {
        throw UsageError("construct_sphere_witness: x* is not a boundary point");
    }
    const std::size_t m = x_star.size();
    double norm = 0.0;
    for (double v : nu) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw UsageError("construct_sphere_witness: zero normal");

    SphereWitness w;
    w.x_star.assign(x_star.begin(), x_star.end());
    w.normal.resize(m);
    w.x_prime.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        w.normal[i] = nu[i] / norm;
        w.x_prime[i] = x_star[i] + lambda * w.normal[i];
    }
    w.lambda = lambda;
    w.beta = beta;

    std::vector<double> a(m * m);
    model.diffusion(x_star.data(), a.data());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) w.normal_form += a[i * m + j] * w.normal[i] * w.normal[j];
    }
    if (!(w.normal_form > 1e-12)) {
        throw ConditionError("construct_sphere_witness: normal noise condition fails at x*: nu^T sigma sigma^T nu = " +
                                 io::fmt17(w.normal_form) + " (must be > 0)",
                             w.normal_form);
    }
    if (U.contains_closure(w.x_prime)) {
        throw UsageError("construct_sphere_witness: x* + lambda nu must lie outside the closure of U (nu must point outward)");
    }
    return w;
}

// ------------------------------------------------------------ nice points

nlohmann::json NicenessCertificate::to_json() const {
    nlohmann::json j{{"x_star", x_star},
                     {"witness", witness},
                     {"radius", radius},
                     {"grid_n", grid_n},
                     {"grid_points", grid_points},
                     {"w_at_x_star", w_at_x_star},
                     {"min_w", min_w},
                     {"max_Lw", max_Lw},
                     {"argmin_w", argmin_w},
                     {"argmax_Lw", argmax_Lw},
                     {"checks",
                      {{"w_vanishes_at_x_star", vanishes_at_x_star},
                       {"w_positive", positive},
                       {"Lw_negative", generator_negative}}},
                     {"valid", valid}};
    if (Lw) j["Lw"] = Lw->to_string();
    return j;
}

NicenessCertificate certify_nice_point(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                       const Witness& w, double radius, int grid_n) {
    require_dim(model, U, x_star, "certify_nice_point");
    if (!(radius > 0.0)) throw UsageError("certify_nice_point: radius must be positive");
    if (grid_n < 4) throw UsageError("certify_nice_point: grid too coarse (grid_n must be at least 4)");
    const std::size_t m = x_star.size();

    NicenessCertificate cert;
    cert.x_star.assign(x_star.begin(), x_star.end());
    cert.radius = radius;
    cert.grid_n = grid_n;

    std::function<double(std::span<const double>)> wf, lwf;
    if (const auto* p = std::get_if<MultiPoly>(&w)) {
        if (p->dim() != m) throw DimensionError("certify_nice_point: witness dimension mismatch");
        cert.Lw = apply_generator(model.drift_poly(), model.diffusion_poly(), *p);
        cert.witness = p->to_string();
        const MultiPoly lw = *cert.Lw;
        wf = [p](std::span<const double> x) { return (*p)(x); };
        lwf = [lw](std::span<const double> x) { return lw(x); };
    } else {
        const auto& s = std::get<SphereWitness>(w);
        if (s.x_star.size() != m) throw DimensionError("certify_nice_point: witness dimension mismatch");
        cert.witness = "sphere(lambda=" + io::fmt17(s.lambda) + ", beta=" + io::fmt17(s.beta) + ")";
        wf = [&s](std::span<const double> x) { return s.value(x); };
        lwf = [&s, &model](std::span<const double> x) { return s.generator(model, x); };
    }

    cert.w_at_x_star = wf(x_star);
    cert.vanishes_at_x_star = std::abs(cert.w_at_x_star) <= 1e-12;
    cert.min_w = std::numeric_limits<double>::infinity();
    cert.max_Lw = -std::numeric_limits<double>::infinity();
    const double exclusion = radius / grid_n;

    std::vector<int> idx(m, 0);
    std::vector<double> y(m);
    const double step = 2.0 * radius / (grid_n - 1);
    for (;;) {
        for (std::size_t i = 0; i < m; ++i) y[i] = x_star[i] - radius + step * idx[i];
        const double d = distance(y, x_star);
        if (d <= radius * (1.0 + 1e-12) && U.contains_closure(y)) {
            ++cert.grid_points;
            const double lw = lwf(y);
            if (lw > cert.max_Lw) {
                cert.max_Lw = lw;
                cert.argmax_Lw = y;
            }
            if (d > exclusion) {
                const double wv = wf(y);
                if (wv < cert.min_w) {
                    cert.min_w = wv;
                    cert.argmin_w = y;
                }
            }
        }
        std::size_t k = 0;
        while (k < m && ++idx[k] == grid_n) idx[k++] = 0;
        if (k == m) break;
    }
    // x* itself always belongs to the neighborhood.
    {
        const double lw = lwf(x_star);
        if (lw > cert.max_Lw) {
            cert.max_Lw = lw;
            cert.argmax_Lw.assign(x_star.begin(), x_star.end());
        }
    }
    cert.positive = std::isfinite(cert.min_w) && cert.min_w > 0.0;
    cert.generator_negative = cert.max_Lw < 0.0;
    cert.valid = cert.vanishes_at_x_star && cert.positive && cert.generator_negative;
    return cert;
}

// ------------------------------------------------------------- UID / UIP

nlohmann::json TailReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < M_schedule.size(); ++i) rows.push_back({{"M", M_schedule[i]}, {"tail", tails[i]}});
    return {{"diagnostic", true},
            {"variable", variable},
            {"x_star", x_star},
            {"delta", delta},
            {"samples", samples},
            {"tails", rows},
            {"censored_fraction", censored_fraction},
            {"tolerance", tolerance},
            {"passes", passes}};
}

std::string TailReport::to_csv() const {
    std::ostringstream os;
    os << "M,tail\n";
    for (std::size_t i = 0; i < M_schedule.size(); ++i) {
        os << io::fmt17(M_schedule[i]) << ',' << io::fmt17(tails[i]) << '\n';
    }
    return os.str();
}

namespace {

TailReport tail_diagnostic(const DiffusionModel& model, const Domain& U, const ScalarFn& fn, bool occupation,
                           std::span<const double> x_star, double delta, std::span<const double> M_schedule,
                           std::size_t n_paths, const SimConfig& cfg, const TailOptions& opt, const char* who) {
    cfg.validate();
    require_dim(model, U, x_star, who);
    if (!(delta > 0.0)) throw UsageError(std::string(who) + ": delta must be positive");
    if (M_schedule.empty()) throw UsageError(std::string(who) + ": empty M schedule");
    for (std::size_t i = 1; i < M_schedule.size(); ++i) {
        if (!(M_schedule[i] > M_schedule[i - 1])) throw UsageError(std::string(who) + ": M schedule must increase");
    }
    if (n_paths == 0 || opt.n_points == 0) throw UsageError(std::string(who) + ": need paths and sample points");

    TailReport rep;
    rep.variable = occupation ? "int_0^tau f ds" : "g(x_tau)";
    rep.x_star.assign(x_star.begin(), x_star.end());
    rep.delta = delta;
    rep.M_schedule.assign(M_schedule.begin(), M_schedule.end());
    rep.tails.assign(M_schedule.size(), 0.0);
    rep.tolerance = opt.tolerance;
    rep.samples = sample_near(U, x_star, delta, opt.n_points, cfg.seed, who);

    struct Run {
        const ScalarFn* f;
        double integral = 0.0;
        bool step(double, const double* x, double h) {
            if (f) integral += (*f)(x)*h;
            return true;
        }
    };
    bool any_exit = false;
    std::vector<double> y(n_paths);
    std::vector<char> censored(n_paths);
    for (const auto& x : rep.samples) {
        parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
            PathStream stream(cfg.seed, i);
            Run obs{occupation && !fn.is_zero() ? &fn : nullptr};
            const ExitRecord rec = detail::run_path(model, U, x, cfg, stream, obs).record;
            censored[i] = rec.censored();
            y[i] = std::abs(occupation ? obs.integral : fn(rec.terminal_state.data()));
        });
        std::size_t n_cens = 0;
        for (char c : censored) n_cens += c ? 1 : 0;
        any_exit = any_exit || n_cens < n_paths;
        rep.censored_fraction.push_back(static_cast<double>(n_cens) / static_cast<double>(n_paths));
        for (std::size_t k = 0; k < M_schedule.size(); ++k) {
            double s = 0.0;
            for (double v : y) {
                if (v > M_schedule[k]) s += v;
            }
            rep.tails[k] = std::max(rep.tails[k], s / static_cast<double>(n_paths));
        }
    }
    if (!any_exit) throw EstimationError(std::string(who) + ": no sampled start produced an exit", 1.0);
    rep.passes = rep.tails.back() < opt.tolerance;
    return rep;
}

} // namespace

TailReport diagnose_uid(const DiffusionModel& model, const Domain& U, const ScalarFn& g,
                        std::span<const double> x_star, double delta, std::span<const double> M_schedule,
                        std::size_t n_paths, const SimConfig& cfg, const TailOptions& opt) {
    return tail_diagnostic(model, U, g, false, x_star, delta, M_schedule, n_paths, cfg, opt, "diagnose_uid");
}

TailReport diagnose_uip(const DiffusionModel& model, const Domain& U, const ScalarFn& f,
                        std::span<const double> x_star, double delta, std::span<const double> M_schedule,
                        std::size_t n_paths, const SimConfig& cfg, const TailOptions& opt) {
    return tail_diagnostic(model, U, f, true, x_star, delta, M_schedule, n_paths, cfg, opt, "diagnose_uip");
}

// ---------------------------------------------------------------------- CE

nlohmann::json CEReport::to_json() const {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        table.push_back({{"n", r.n},
                         {"delta2", r.delta2},
                         {"max_probability", r.max_probability},
                         {"censored_fraction", r.censored_fraction}});
    }
    nlohmann::json j{{"diagnostic", true}, {"success", success}, {"trivial", trivial},
                     {"delta1", delta1},   {"rows", table},      {"message", message}};
    j["n"] = n ? nlohmann::json(*n) : nlohmann::json();
    j["delta2"] = delta2 ? nlohmann::json(*delta2) : nlohmann::json();
    return j;
}

CEReport diagnose_ce(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                     const Exhaustion& exhaustion, double delta1, std::size_t n_paths, const SimConfig& cfg,
                     const CEOptions& opt) {
    cfg.validate();
    require_dim(model, U, x_star, "diagnose_ce");
    if (!(delta1 > 0.0 && delta1 < 1.0)) throw UsageError("diagnose_ce: delta1 must lie in (0, 1)");
    if (exhaustion.dim() != model.dim_state()) throw DimensionError("diagnose_ce: exhaustion dimension mismatch");
    if (opt.n_schedule.empty() || opt.delta2_schedule.empty()) throw UsageError("diagnose_ce: empty schedule");
    if (n_paths == 0) throw UsageError("diagnose_ce: n_paths must be positive");

    CEReport rep;
    rep.delta1 = delta1;
    const int n_max = *std::max_element(opt.n_schedule.begin(), opt.n_schedule.end());
    const double d2_max = *std::max_element(opt.delta2_schedule.begin(), opt.delta2_schedule.end());

    if (U.bounded()) {
        if (const auto n = exhaustion.first_covering(U, n_max)) {
            // Paths stopped at the exit from U never leave X_n first.
            rep.success = rep.trivial = true;
            rep.n = *n;
            rep.delta2 = d2_max;
            rep.rows.push_back({*n, d2_max, 0.0, 0.0});
            rep.message = "X_n contains the closure of U; the escape probability is exactly 0";
            return rep;
        }
    }

    // Escape from X_n before leaving U; the observer sees each left-endpoint
    // state, so X_n-exits are resolved at the step grid.
    struct Escape {
        const Domain* Xn;
        bool escaped = false;
        bool step(double, const double* x, double) {
            if (!Xn->contains({x, Xn->dim()})) {
                escaped = true;
                return false;
            }
            return true;
        }
    };

    std::vector<double> deltas = opt.delta2_schedule;
    std::sort(deltas.begin(), deltas.end(), std::greater<>());
    std::vector<int> ns = opt.n_schedule;
    std::sort(ns.begin(), ns.end());
    std::vector<char> hit(n_paths), cens(n_paths);
    for (int n : ns) {
        const Domain Xn = exhaustion(n);
        for (double d2 : deltas) {
            const auto xs = sample_near(U, x_star, d2, opt.n_points, cfg.seed, "diagnose_ce");
            CERow row{n, d2, 0.0, 0.0};
            for (const auto& x : xs) {
                if (!Xn.contains(x)) {
                    row.max_probability = 1.0;
                    continue;
                }
                parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
                    PathStream stream(cfg.seed, i);
                    Escape obs{&Xn};
                    const auto res = detail::run_path(model, U, x, cfg, stream, obs);
                    // Censored paths have not been ruled out: count them as escapes.
                    hit[i] = obs.escaped || res.record.censored();
                    cens[i] = !obs.escaped && res.record.censored();
                });
                std::size_t h = 0, c = 0;
                for (std::size_t i = 0; i < n_paths; ++i) {
                    h += hit[i] ? 1 : 0;
                    c += cens[i] ? 1 : 0;
                }
                row.max_probability = std::max(row.max_probability, static_cast<double>(h) / static_cast<double>(n_paths));
                row.censored_fraction = std::max(row.censored_fraction, static_cast<double>(c) / static_cast<double>(n_paths));
            }
            rep.rows.push_back(row);
            if (row.max_probability < delta1) {
                rep.success = true;
                rep.n = n;
                rep.delta2 = d2;
                rep.message = "bound holds on all sampled starts";
                return rep;
            }
        }
    }
    rep.message = U.bounded() ? "no tested (n, delta2) satisfied the bound"
                              : "inconclusive: U is unbounded and no tested (n, delta2) satisfied the bound";
    return rep;
}

} // namespace stochar
