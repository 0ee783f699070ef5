#include "stochar/estimate.hpp"

#include "stochar/error.hpp"
#include "stochar/io.hpp"
#include "stochar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace stochar {

namespace {

constexpr std::size_t kBlock = 1024;

// Streaming mean/variance (Welford), mergeable in a fixed order (Chan et al.).
struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++n;
        const double d = v - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (v - mean);
    }
    void merge(const Moments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
        const double d = o.mean - mean;
        const double nt = na + nb;
        mean += d * nb / nt;
        m2 += o.m2 + d * d * na * nb / nt;
        n += o.n;
    }
    MCEstimate estimate() const {
        MCEstimate e;
        e.n = n;
        e.mean = mean;
        e.std_error = n > 1 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        return e;
    }
};

// Running cost of one path: int f ds and int f exp(-beta s) ds, f frozen at
// the left endpoint and the discount integrated exactly over each step.
struct CostObserver {
    const ScalarFn* f = nullptr;
    double beta = 0.0;
    double integral = 0.0;
    double discounted = 0.0;
    // Optional discounted occupation histogram (in-U left endpoints only).
    const Domain* U = nullptr;
    Histogram* hist = nullptr;
    double weight = 1.0;

    bool step(double t, const double* x, double h) {
        const double kernel = beta > 0.0 ? (std::exp(-beta * t) - std::exp(-beta * (t + h))) / beta : h;
        if (f) {
            const double v = (*f)(x);
            integral += v * h;
            discounted += v * kernel;
        }
        if (hist && U->membership({x, U->dim()}) == Membership::interior) {
            if (auto c = hist->grid.cell_of(x)) {
                hist->mass[*c] += weight * kernel;
            } else {
                hist->outside += weight * kernel;
            }
        }
        return true;
    }
};

template <class Obs>
ExitRecord run_indexed(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                       const SimConfig& cfg, std::uint64_t index, Obs& obs) {
    PathStream stream(cfg.seed, index);
    return detail::run_path(model, U, x, cfg, stream, obs).record;
}

void check_start(const DiffusionModel& model, const Domain& U, std::span<const double> x, bool interior_only,
                 const char* who) {
    if (x.size() != model.dim_state() || U.dim() != model.dim_state()) {
        throw DimensionError(std::string(who) + ": dimension mismatch");
    }
    const Membership m = U.membership(x);
    if (m == Membership::exterior || (interior_only && m != Membership::interior)) {
        throw UsageError(std::string(who) + ": start point must lie in " + (interior_only ? "U" : "the closure of U"));
    }
}

void require_paths(std::size_t n_paths, const char* who) {
    if (n_paths == 0) throw UsageError(std::string(who) + ": n_paths must be positive");
}

} // namespace

const char* to_string(BiasBound b) noexcept {
    switch (b) {
    case BiasBound::none: return "none";
    case BiasBound::lower: return "lower";
    case BiasBound::upper: return "upper";
    }
    return "?";
}

nlohmann::json MCEstimate::to_json() const {
    nlohmann::json j{{"mean", mean},
                     {"stderr", std_error},
                     {"n", n},
                     {"censored_fraction", censored_fraction},
                     {"bound", to_string(bound)}};
    if (!note.empty()) j["note"] = note;
    return j;
}

MCEstimate summarize(std::span<const double> samples) {
    Moments m;
    for (double v : samples) m.add(v);
    return m.estimate();
}

// ---------------------------------------------------------------- ScalarFn

ScalarFn ScalarFn::constant(std::size_t dim, double c) {
    ScalarFn f(dim, Kind::constant);
    f.c_ = c;
    return f;
}

ScalarFn ScalarFn::polynomial(MultiPoly p) {
    if (p.is_constant()) return constant(p.dim(), p.coefficient(Exponents(p.dim(), 0)));
    ScalarFn f(p.dim(), Kind::polynomial);
    f.compiled_ = CompiledPoly(p);
    f.poly_ = std::move(p);
    return f;
}

ScalarFn ScalarFn::indicator(std::vector<double> normal, double offset) {
    if (normal.empty()) throw DimensionError("indicator: empty normal");
    ScalarFn f(normal.size(), Kind::indicator);
    f.normal_ = std::move(normal);
    f.c_ = offset;
    return f;
}

ScalarFn ScalarFn::callable(std::size_t dim, std::function<double(std::span<const double>)> fn,
                            std::optional<double> sup_abs, std::string name) {
    ScalarFn f(dim, Kind::callable);
    f.fn_ = std::move(fn);
    f.sup_ = sup_abs;
    f.name_ = std::move(name);
    return f;
}

double ScalarFn::operator()(const double* x) const {
    switch (kind_) {
    case Kind::constant: return c_;
    case Kind::polynomial: return compiled_(x);
    case Kind::indicator: {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += normal_[i] * x[i];
        return s >= c_ ? 1.0 : 0.0;
    }
    case Kind::callable: return fn_({x, dim_});
    }
    return 0.0;
}

std::optional<double> ScalarFn::sup_abs(const Domain& where) const {
    switch (kind_) {
    case Kind::constant: return std::abs(c_);
    case Kind::indicator: return 1.0;
    case Kind::callable: return sup_;
    case Kind::polynomial: {
        const auto bb = where.bounding_box();
        if (!bb) return std::nullopt;
        double bound = 0.0;
        for (const auto& [e, c] : poly_.terms()) {
            double t = std::abs(c);
            for (std::size_t i = 0; i < dim_; ++i) {
                t *= std::pow(std::max(std::abs(bb->first[i]), std::abs(bb->second[i])), e[i]);
            }
            bound += t;
        }
        return bound;
    }
    }
    return std::nullopt;
}

std::string ScalarFn::describe() const {
    switch (kind_) {
    case Kind::constant: return io::fmt17(c_);
    case Kind::polynomial: return poly_.to_string();
    case Kind::indicator: return "1{n.x >= " + io::fmt17(c_) + "}, n=(" + io::join17(normal_) + ")";
    case Kind::callable: return name_;
    }
    return "?";
}

ScalarFn ScalarFn::from_json(const nlohmann::json& j, std::size_t dim, const std::string& where) {
    if (j.is_number()) return constant(dim, j.get<double>());
    if (!j.is_object() || j.size() != 1) {
        throw ParseError(where, "expected a number or an object with one of constant/poly/indicator");
    }
    if (j.contains("constant")) {
        if (!j["constant"].is_number()) throw ParseError(where + ".constant", "expected a number");
        return constant(dim, j["constant"].get<double>());
    }
    if (j.contains("poly")) return polynomial(io::poly_from_json(j["poly"], dim, where + ".poly"));
    if (j.contains("indicator")) {
        const auto& ind = j["indicator"];
        if (!ind.is_object() || !ind.contains("normal") || !ind.contains("offset")) {
            throw ParseError(where + ".indicator", "expected {normal, offset}");
        }
        std::vector<double> n;
        try {
            n = ind["normal"].get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(where + ".indicator.normal", "expected a list of numbers");
        }
        if (n.size() != dim) throw DimensionError(where + ".indicator.normal: length must equal dim_state");
        if (!ind["offset"].is_number()) throw ParseError(where + ".indicator.offset", "expected a number");
        return indicator(std::move(n), ind["offset"].get<double>());
    }
    throw ParseError(where, "unknown function kind '" + j.begin().key() + "'");
}

// -------------------------------------------------------------------- Grid

Grid::Grid(std::vector<double> lo_, std::vector<double> hi_, std::vector<std::size_t> cells_)
    : lo(std::move(lo_)), hi(std::move(hi_)), cells(std::move(cells_)) {
    if (lo.empty() || lo.size() != hi.size() || lo.size() != cells.size()) {
        throw DimensionError("Grid: lo, hi and cells must have the same positive length");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]) || cells[i] == 0) {
            throw UsageError("Grid: need finite lo < hi and at least one cell per axis");
        }
    }
}

std::size_t Grid::size() const noexcept {
    std::size_t n = 1;
    for (auto c : cells) n *= c;
    return n;
}

std::optional<std::size_t> Grid::cell_of(const double* x) const {
    std::size_t index = 0;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(x[i] >= lo[i] && x[i] < hi[i])) return std::nullopt;
        auto k = static_cast<std::size_t>((x[i] - lo[i]) / (hi[i] - lo[i]) * static_cast<double>(cells[i]));
        k = std::min(k, cells[i] - 1);
        index = index * cells[i] + k;
    }
    return index;
}

std::vector<double> Grid::center(std::size_t index) const {
    std::vector<double> c(lo.size());
    for (std::size_t i = lo.size(); i-- > 0;) {
        const std::size_t k = index % cells[i];
        index /= cells[i];
        c[i] = lo[i] + (static_cast<double>(k) + 0.5) * (hi[i] - lo[i]) / static_cast<double>(cells[i]);
    }
    return c;
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= (hi[i] - lo[i]) / static_cast<double>(cells[i]);
    return v;
}

double Histogram::total() const {
    double s = outside;
    for (double v : mass) s += v;
    return s;
}

std::string Histogram::to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < grid.dim(); ++i) os << "c" << (i + 1) << ',';
    os << "mass\n";
    for (std::size_t k = 0; k < mass.size(); ++k) {
        os << io::join17(grid.center(k)) << ',' << io::fmt17(mass[k]) << '\n';
    }
    return os.str();
}

// -------------------------------------------------------------- estimators

MCEstimate estimate_u_stoc(const DiffusionModel& model, const Domain& U, const ScalarFn& f, const ScalarFn& g,
                           std::span<const double> x, std::size_t n_paths, const SimConfig& cfg) {
    cfg.validate();
    check_start(model, U, x, true, "estimate_u_stoc");
    require_paths(n_paths, "estimate_u_stoc");
    std::vector<double> payoff(n_paths);
    std::vector<char> censored(n_paths);
    parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
        CostObserver obs;
        if (!f.is_zero()) obs.f = &f;
        const ExitRecord rec = run_indexed(model, U, x, cfg, i, obs);
        censored[i] = rec.censored();
        if (!rec.censored()) payoff[i] = obs.integral + g(rec.exit_point->data());
    });
    Moments m;
    std::size_t n_cens = 0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        if (censored[i]) {
            ++n_cens;
        } else {
            m.add(payoff[i]);
        }
    }
    const double cf = static_cast<double>(n_cens) / static_cast<double>(n_paths);
    if (m.n == 0) throw EstimationError("estimate_u_stoc: every path was censored at the horizon", cf);
    MCEstimate e = m.estimate();
    e.censored_fraction = cf;
    if (n_cens > 0) e.note = "censored paths excluded";
    return e;
}

MCEstimate estimate_exit_moment(const DiffusionModel& model, const Domain& U, std::span<const double> x, int k,
                                std::size_t n_paths, const SimConfig& cfg) {
    if (k < 1) throw UsageError("estimate_exit_moment: k must be a positive integer");
    cfg.validate();
    check_start(model, U, x, true, "estimate_exit_moment");
    require_paths(n_paths, "estimate_exit_moment");
    const TrajectoryBatch batch = simulate_batch(model, U, x, cfg, n_paths);
    Moments m;
    for (const auto& r : batch.records) {
        if (!r.censored()) m.add(std::pow(*r.exit_time, k));
    }
    const double cf = batch.censored_fraction();
    if (m.n == 0) throw EstimationError("estimate_exit_moment: every path was censored at the horizon", cf);
    MCEstimate e = m.estimate();
    e.censored_fraction = cf;
    if (cf > 0.0) {
        e.bound = BiasBound::lower;
        e.note = "censored paths excluded; biased downward";
    }
    return e;
}

MCEstimate estimate_exp_moment(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                               double delta, std::size_t n_paths, const SimConfig& cfg) {
    cfg.validate();
    check_start(model, U, x, false, "estimate_exp_moment");
    require_paths(n_paths, "estimate_exp_moment");
    if (!std::isfinite(delta)) throw UsageError("estimate_exp_moment: delta must be finite");
    if (delta == 0.0) {
        MCEstimate e;
        e.mean = 1.0;
        e.n = n_paths;
        return e;
    }
    const TrajectoryBatch batch = simulate_batch(model, U, x, cfg, n_paths);
    Moments m;
    for (const auto& r : batch.records) m.add(std::exp(delta * (r.censored() ? cfg.horizon : *r.exit_time)));
    const double cf = batch.censored_fraction();
    if (cf == 1.0) throw EstimationError("estimate_exp_moment: every path was censored at the horizon", cf);
    MCEstimate e = m.estimate();
    e.censored_fraction = cf;
    // exp(delta min(tau, T)) sits on one side of exp(delta tau) whether or not
    // a censored path was observed.
    e.bound = delta > 0.0 ? BiasBound::lower : BiasBound::upper;
    if (cf > 0.0) e.note = "censored paths enter with tau replaced by the horizon";
    return e;
}

std::vector<MCEstimate> survival_curve(const TrajectoryBatch& batch, std::span<const double> times) {
    std::vector<double> exits;
    exits.reserve(batch.records.size());
    for (const auto& r : batch.records) {
        exits.push_back(r.censored() ? INFINITY : *r.exit_time);
    }
    std::sort(exits.begin(), exits.end());
    const double n = static_cast<double>(exits.size());
    std::vector<MCEstimate> out;
    for (double t : times) {
        const auto alive = static_cast<double>(exits.end() - std::upper_bound(exits.begin(), exits.end(), t));
        MCEstimate e;
        e.n = exits.size();
        e.mean = n > 0 ? alive / n : 0.0;
        e.std_error = n > 1 ? std::sqrt(e.mean * (1.0 - e.mean) / (n - 1.0)) : 0.0;
        out.push_back(e);
    }
    return out;
}

MCEstimate estimate_survival(const DiffusionModel& model, const Domain& U, std::span<const double> x, double t,
                             std::size_t n_paths, const SimConfig& cfg) {
    cfg.validate();
    if (!(t >= 0.0) || !(t < cfg.horizon)) {
        throw UsageError("estimate_survival: t must satisfy 0 <= t < horizon");
    }
    check_start(model, U, x, false, "estimate_survival");
    require_paths(n_paths, "estimate_survival");
    const TrajectoryBatch batch = simulate_batch(model, U, x, cfg, n_paths);
    const double ts[] = {t};
    return survival_curve(batch, ts).front();
}

nlohmann::json EscapeReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        rows.push_back({{"horizon", schedule[i]}, {"p_tau_gt_T", upper[i].to_json()}});
    }
    return {{"estimates", rows}, {"monotone", monotone}, {"bracket", {bracket_lo, bracket_hi}}};
}

EscapeReport estimate_escape_prob(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                                  std::span<const double> schedule, std::size_t n_paths, const SimConfig& cfg) {
    if (schedule.empty()) throw UsageError("estimate_escape_prob: empty horizon schedule");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i] > 0.0) || (i > 0 && !(schedule[i] > schedule[i - 1]))) {
            throw UsageError("estimate_escape_prob: schedule must be positive and strictly increasing");
        }
    }
    check_start(model, U, x, false, "estimate_escape_prob");
    require_paths(n_paths, "estimate_escape_prob");
    SimConfig c = cfg;
    c.horizon = schedule.back();
    c.validate();
    const TrajectoryBatch batch = simulate_batch(model, U, x, c, n_paths);

    EscapeReport rep;
    rep.schedule.assign(schedule.begin(), schedule.end());
    // P{tau > T_i}; the last horizon is the censoring time itself.
    std::vector<double> ts(schedule.begin(), schedule.end());
    ts.back() = std::nextafter(ts.back(), 0.0);
    rep.upper = survival_curve(batch, ts);
    for (std::size_t i = 1; i < rep.upper.size(); ++i) {
        if (rep.upper[i].mean > rep.upper[i - 1].mean) rep.monotone = false;
    }
    for (auto& e : rep.upper) e.bound = BiasBound::upper;
    rep.bracket_hi = rep.upper.back().mean;
    return rep;
}

Phi Phi::identity() {
    return {[](double t) { return t; }, [](double) { return 1.0; }, false, "t"};
}

Phi Phi::power(int k) {
    if (k < 1) throw UsageError("Phi::power: k must be positive");
    return {[k](double t) { return std::pow(t, k); },
            [k](double t) { return k * std::pow(t, k - 1); },
            k >= 2,
            "t^" + std::to_string(k)};
}

Phi Phi::exponential(double delta) {
    if (!(delta > 0.0)) throw UsageError("Phi::exponential: delta must be positive");
    return {[delta](double t) { return std::exp(delta * t); },
            [delta](double t) { return delta * std::exp(delta * t); },
            true,
            "exp(" + io::fmt17(delta) + " t)"};
}

PhiReport estimate_phi_functional(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                                  const Phi& phi, std::size_t n_paths, const SimConfig& cfg) {
    cfg.validate();
    check_start(model, U, x, true, "estimate_phi_functional");
    require_paths(n_paths, "estimate_phi_functional");
    const TrajectoryBatch batch = simulate_batch(model, U, x, cfg, n_paths);
    std::vector<double> taus;
    Moments m1, m2;
    for (const auto& r : batch.records) {
        if (r.censored()) continue;
        taus.push_back(*r.exit_time);
        m1.add(phi.value(*r.exit_time));
        m2.add(phi.derivative(*r.exit_time));
    }
    const double cf = batch.censored_fraction();
    if (taus.empty()) throw EstimationError("estimate_phi_functional: every path was censored at the horizon", cf);

    PhiReport rep;
    rep.v1 = m1.estimate();
    rep.v2 = m2.estimate();
    for (MCEstimate* e : {&rep.v1, &rep.v2}) {
        e->censored_fraction = cf;
        if (cf > 0.0) {
            e->bound = BiasBound::lower;
            e->note = "censored paths excluded";
        }
    }

    // phi(0) + int phi'(t) S(t) dt on the grid t_j = j dt, S the empirical
    // survival of the non-censored exit times.
    std::sort(taus.begin(), taus.end());
    const double n = static_cast<double>(taus.size());
    const double dt = cfg.dt;
    auto integrand = [&](double t) {
        const auto alive = static_cast<double>(taus.end() - std::upper_bound(taus.begin(), taus.end(), t));
        return phi.derivative(t) * alive / n;
    };
    const auto steps = static_cast<std::size_t>(std::ceil(taus.back() / dt));
    double integral = 0.0;
    double left = integrand(0.0);
    for (std::size_t j = 0; j < steps; ++j) {
        const double right = integrand(static_cast<double>(j + 1) * dt);
        integral += 0.5 * dt * (left + right);
        left = right;
    }
    rep.cross_check = phi.value(0.0) + integral;
    // Both sides are driven by the same samples; treat them as independent
    // for a conservative combined error.
    rep.combined_stderr = std::sqrt(2.0) * rep.v1.std_error;
    rep.consistent = std::abs(rep.v1.mean - rep.cross_check) <= 3.0 * rep.combined_stderr + 1e-12;
    return rep;
}

nlohmann::json GreenEstimate::to_json() const {
    nlohmann::json j{{"beta", beta}, {"value", value.to_json()}};
    j["censoring_bias_bound"] = censoring_bias_bound ? nlohmann::json(*censoring_bias_bound) : nlohmann::json();
    if (density) {
        j["density_total"] = density->total();
        j["density_outside_grid"] = density->outside;
    }
    return j;
}

GreenEstimate estimate_green(const DiffusionModel& model, const Domain& U, double beta, const ScalarFn& f,
                             std::span<const double> x, std::size_t n_paths, const SimConfig& cfg,
                             const std::optional<Grid>& grid) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw UsageError("estimate_green: beta must be positive");
    cfg.validate();
    check_start(model, U, x, false, "estimate_green");
    require_paths(n_paths, "estimate_green");
    if (grid && grid->dim() != model.dim_state()) throw DimensionError("estimate_green: grid dimension mismatch");

    struct Block {
        Moments value;
        std::size_t censored = 0;
        std::optional<Histogram> hist;
    };
    Block init;
    if (grid) init.hist = Histogram{*grid, std::vector<double>(grid->size(), 0.0), 0.0};
    const double weight = 1.0 / static_cast<double>(n_paths);
    const auto blocks = parallel_blocks(n_paths, cfg.threads, kBlock, init, [&](std::size_t b, std::size_t e, Block& acc) {
        for (std::size_t i = b; i < e; ++i) {
            CostObserver obs;
            obs.f = &f;
            obs.beta = beta;
            if (acc.hist) {
                obs.U = &U;
                obs.hist = &*acc.hist;
                obs.weight = weight;
            }
            const ExitRecord rec = run_indexed(model, U, x, cfg, i, obs);
            acc.value.add(f.is_zero() ? 0.0 : obs.discounted);
            acc.censored += rec.censored() ? 1 : 0;
        }
    });

    GreenEstimate out;
    out.beta = beta;
    Moments total;
    std::size_t censored = 0;
    for (const auto& b : blocks) {
        total.merge(b.value);
        censored += b.censored;
    }
    out.value = total.estimate();
    out.value.censored_fraction = static_cast<double>(censored) / static_cast<double>(n_paths);
    if (const auto sup = f.sup_abs(U)) out.censoring_bias_bound = std::exp(-beta * cfg.horizon) * *sup / beta;
    if (grid) {
        Histogram h{*grid, std::vector<double>(grid->size(), 0.0), 0.0};
        for (const auto& b : blocks) {
            for (std::size_t k = 0; k < h.mass.size(); ++k) h.mass[k] += b.hist->mass[k];
            h.outside += b.hist->outside;
        }
        out.density = std::move(h);
    }
    return out;
}

MCEstimate dynkin_residual(const DiffusionModel& model, const MultiPoly& phi, std::span<const double> x, double t,
                           const Domain& K, std::size_t n_paths, const SimConfig& cfg) {
    if (!(t > 0.0) || !std::isfinite(t)) throw UsageError("dynkin_residual: t must be positive");
    if (!K.bounded()) throw UsageError("dynkin_residual: K must be bounded");
    if (phi.dim() != model.dim_state()) throw DimensionError("dynkin_residual: phi dimension mismatch");
    check_start(model, K, x, true, "dynkin_residual");
    require_paths(n_paths, "dynkin_residual");
    const MultiPoly Lphi = apply_generator(model.drift_poly(), model.diffusion_poly(), phi);
    const ScalarFn lf = ScalarFn::polynomial(Lphi);
    const ScalarFn pf = ScalarFn::polynomial(phi);

    // Land exactly on t: shrink dt so that t is a whole number of steps.
    SimConfig c = cfg;
    c.horizon = t;
    c.dt = t / std::ceil(t / cfg.dt - 1e-9);
    c.validate();

    const double phi_x = pf(x.data());
    std::vector<double> r(n_paths);
    parallel_for(n_paths, c.threads, [&](std::size_t i) {
        CostObserver obs;
        if (!lf.is_zero()) obs.f = &lf;
        const ExitRecord rec = run_indexed(model, K, x, c, i, obs);
        r[i] = pf(rec.terminal_state.data()) - phi_x - obs.integral;
    });
    MCEstimate e = summarize(r);
    e.note = "stopped at min(t, exit from K)";
    return e;
}

std::string PdeResidualReport::to_csv() const {
    std::ostringstream os;
    const std::size_t m = points.empty() ? 0 : points.front().x.size();
    for (std::size_t i = 0; i < m; ++i) os << 'x' << (i + 1) << ',';
    os << "u_hat,residual,stderr,tolerance,pass\n";
    for (const auto& p : points) {
        os << io::join17(p.x) << ',' << io::fmt17(p.u_hat) << ',' << io::fmt17(p.residual.mean) << ','
           << io::fmt17(p.residual.std_error) << ',' << io::fmt17(p.tolerance) << ',' << (p.pass ? 1 : 0) << '\n';
    }
    return os.str();
}

PdeResidualReport pde_residual_grid(const DiffusionModel& model, const Domain& U, const ScalarFn& f,
                                    const ScalarFn& g, const std::vector<std::vector<double>>& points, double h,
                                    std::size_t n_paths, const SimConfig& cfg) {
    cfg.validate();
    if (!(h > 0.0)) throw UsageError("pde_residual_grid: h must be positive");
    if (points.empty()) throw UsageError("pde_residual_grid: no grid points");
    require_paths(n_paths, "pde_residual_grid");
    const std::size_t m = model.dim_state();

    // Stencil: center, +-h e_j, and the four corners for each nonzero a_jk.
    std::map<std::vector<double>, std::size_t> index;
    std::vector<std::vector<double>> starts;
    auto start_of = [&](std::vector<double> y) {
        if (U.membership(y) != Membership::interior) {
            throw UsageError("pde_residual_grid: stencil of a grid point leaves U (point too close to the boundary)");
        }
        auto [it, fresh] = index.emplace(y, starts.size());
        if (fresh) starts.push_back(std::move(y));
        return it->second;
    };
    struct Term {
        std::size_t start;
        double coeff;
    };
    struct Stencil {
        std::size_t center;
        std::vector<Term> terms;
        double f_x;
    };
    std::vector<Stencil> stencils;
    std::vector<double> b(m), a(m * m);
    for (const auto& x : points) {
        if (x.size() != m) throw DimensionError("pde_residual_grid: grid point dimension mismatch");
        check_start(model, U, x, true, "pde_residual_grid");
        model.drift(x.data(), b.data());
        model.diffusion(x.data(), a.data());
        Stencil s{start_of(x), {}, f(x.data())};
        auto shifted = [&](std::size_t j, double sj, std::size_t k, double sk) {
            std::vector<double> y = x;
            y[j] += sj * h;
            if (k < m) y[k] += sk * h;
            return start_of(std::move(y));
        };
        double center_coeff = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double first = b[j] / (2.0 * h);
            const double second = 0.5 * a[j * m + j] / (h * h);
            if (first != 0.0 || second != 0.0) {
                s.terms.push_back({shifted(j, +1, m, 0), first + second});
                s.terms.push_back({shifted(j, -1, m, 0), -first + second});
                center_coeff -= 2.0 * second;
            }
            for (std::size_t k = j + 1; k < m; ++k) {
                const double ajk = a[j * m + k];
                if (ajk == 0.0) continue;
                const double c = ajk / (4.0 * h * h);
                s.terms.push_back({shifted(j, +1, k, +1), c});
                s.terms.push_back({shifted(j, +1, k, -1), -c});
                s.terms.push_back({shifted(j, -1, k, +1), -c});
                s.terms.push_back({shifted(j, -1, k, -1), c});
            }
        }
        if (center_coeff != 0.0) s.terms.push_back({s.center, center_coeff});
        stencils.push_back(std::move(s));
    }

    const std::size_t P = stencils.size(), S = starts.size();
    struct Block {
        std::vector<Moments> residual, u;
    };
    const Block init{std::vector<Moments>(P), std::vector<Moments>(P)};
    const auto blocks = parallel_blocks(n_paths, cfg.threads, kBlock, init, [&](std::size_t b0, std::size_t e0, Block& acc) {
        std::vector<double> y(S);
        for (std::size_t i = b0; i < e0; ++i) {
            for (std::size_t s = 0; s < S; ++s) {
                CostObserver obs;
                if (!f.is_zero()) obs.f = &f;
                const ExitRecord rec = run_indexed(model, U, starts[s], cfg, i, obs);
                y[s] = obs.integral + (rec.censored() ? 0.0 : g(rec.exit_point->data()));
            }
            for (std::size_t p = 0; p < P; ++p) {
                double r = stencils[p].f_x;
                for (const auto& t : stencils[p].terms) r += t.coeff * y[t.start];
                acc.residual[p].add(r);
                acc.u[p].add(y[stencils[p].center]);
            }
        }
    });

    PdeResidualReport rep;
    rep.h = h;
    rep.all_pass = true;
    for (std::size_t p = 0; p < P; ++p) {
        Moments res, u;
        for (const auto& bl : blocks) {
            res.merge(bl.residual[p]);
            u.merge(bl.u[p]);
        }
        ResidualPoint pt;
        pt.x = points[p];
        pt.u_hat = u.mean;
        pt.residual = res.estimate();
        pt.tolerance = 3.0 * pt.residual.std_error + h * h;
        pt.pass = std::abs(pt.residual.mean) <= pt.tolerance;
        rep.all_pass = rep.all_pass && pt.pass;
        rep.points.push_back(std::move(pt));
    }
    return rep;
}

} // namespace stochar
