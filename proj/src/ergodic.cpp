#include "stochar/ergodic.hpp"

#include "stochar/error.hpp"
#include "stochar/io.hpp"
#include "stochar/parallel.hpp"
#include "stochar/rng.hpp"
#include "stochar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace stochar {

namespace {

double radial(const double* x, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += (x[i] - c[i]) * (x[i] - c[i]);
    return std::sqrt(s);
}

struct SphereHit {
    bool hit = false;
    bool exploded = false;
    double time = 0.0; // hit time, or the time reached
};

// Steps x (in place) from time t0 until it crosses the sphere |y - c| = R:
// outward when `outward`, inward otherwise. A step landing across the sphere
// is located by one bisection of the segment followed by linear
// interpolation of the radial distance; a step staying on the near side is
// tested with the tangent-halfspace bridge probability. The hit state is
// projected radially onto the sphere. Draws per step: r normals, 1 uniform.
// obs.step(t, x, h) sees each covered piece; hits after t_max are ignored.
template <class Obs>
SphereHit run_to_sphere(const DiffusionModel& model, const std::vector<double>& c, double R, bool outward,
                        std::vector<double>& x, double t0, double t_max, double dt, PathStream& stream, Obs& obs) {
    const std::size_t m = model.dim_state(), r = model.dim_noise();
    std::vector<double> xn(m), b(m), s(m * r), z(r), n(m), mid(m);
    const double sqh = std::sqrt(dt);
    const bool drift_zero = model.drift_is_zero();
    const bool sigma_const = model.sigma_is_constant();
    if (sigma_const) model.sigma(x.data(), s.data());
    if (drift_zero) std::fill(b.begin(), b.end(), 0.0);
    auto beyond = [&](double rho) { return outward ? rho >= R : rho <= R; };

    SphereHit out;
    double t = t0;
    const auto n_steps = static_cast<std::uint64_t>(std::max(0.0, std::ceil((t_max - t0) / dt - 1e-9)));
    for (std::uint64_t step = 0; step < n_steps; ++step) {
        if (!drift_zero) model.drift(x.data(), b.data());
        if (!sigma_const) model.sigma(x.data(), s.data());
        for (std::size_t k = 0; k < r; ++k) z[k] = stream.normal();
        for (std::size_t i = 0; i < m; ++i) {
            double noise = 0.0;
            for (std::size_t k = 0; k < r; ++k) noise += s[i * r + k] * z[k];
            xn[i] = x[i] + b[i] * dt + noise * sqh;
        }
        const double u = stream.uniform();
        if (detail::exploded(xn.data(), m)) {
            obs.step(t, x.data(), std::min(dt, t_max - t));
            out.exploded = true;
            out.time = t + dt;
            return out;
        }
        const double rho = radial(x.data(), c), rhon = radial(xn.data(), c);
        double frac = -1.0;
        if (beyond(rhon)) {
            // g(s) = signed distance past the sphere along the segment.
            auto g = [&](double sfrac) {
                for (std::size_t i = 0; i < m; ++i) mid[i] = x[i] + sfrac * (xn[i] - x[i]);
                const double rr = radial(mid.data(), c);
                return outward ? rr - R : R - rr;
            };
            const double g0 = g(0.0), gm = g(0.5), g1 = g(1.0);
            if (gm >= 0.0) {
                frac = gm > g0 ? 0.5 * (-g0) / (gm - g0) : 0.5;
            } else {
                frac = g1 > gm ? 0.5 + 0.5 * (-gm) / (g1 - gm) : 1.0;
            }
            frac = std::clamp(frac, 0.0, 1.0);
        } else {
            const double d = std::abs(rho - R), dn = std::abs(rhon - R);
            if (rho > 0.0) {
                for (std::size_t i = 0; i < m; ++i) n[i] = (x[i] - c[i]) / rho;
            } else {
                std::fill(n.begin(), n.end(), 0.0);
                n[0] = 1.0;
            }
            double ann = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                double v = 0.0;
                for (std::size_t i = 0; i < m; ++i) v += n[i] * s[i * r + k];
                ann += v * v;
            }
            if (ann > 0.0) {
                const double arg = 2.0 * d * dn / (ann * dt);
                if (arg < 60.0 && u < std::exp(-arg)) frac = 0.5;
            }
        }
        if (frac >= 0.0 && t + frac * dt <= t_max) {
            obs.step(t, x.data(), frac * dt);
            for (std::size_t i = 0; i < m; ++i) mid[i] = x[i] + frac * (xn[i] - x[i]);
            const double rr = radial(mid.data(), c);
            if (rr > 0.0) {
                for (std::size_t i = 0; i < m; ++i) x[i] = c[i] + (mid[i] - c[i]) * (R / rr);
            } else {
                x = mid;
                x[0] += R;
            }
            out.hit = true;
            out.time = t + frac * dt;
            return out;
        }
        obs.step(t, x.data(), std::min(dt, t_max - t));
        x.swap(xn);
        t = t0 + static_cast<double>(step + 1) * dt;
    }
    out.time = t;
    return out;
}

struct NoObs {
    void step(double, const double*, double) {}
};

std::vector<std::vector<double>> cube_grid(const std::vector<double>& c, double R, int grid_n) {
    const std::size_t m = c.size();
    std::vector<std::vector<double>> pts;
    std::vector<int> idx(m, 0);
    const double step = grid_n > 1 ? 2.0 * R / (grid_n - 1) : 0.0;
    for (;;) {
        std::vector<double> y(m);
        for (std::size_t i = 0; i < m; ++i) y[i] = c[i] - R + step * idx[i];
        pts.push_back(std::move(y));
        std::size_t k = 0;
        while (k < m && ++idx[k] == grid_n) idx[k++] = 0;
        if (k == m) break;
    }
    return pts;
}

} // namespace

// ---------------------------------------------------------------- Lyapunov

nlohmann::json LyapunovCertificate::to_json() const {
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& l : levels) {
        lv.push_back({{"k", l.k}, {"w_k", l.w_k}, {"max_p", l.max_p}, {"argmax_p", l.argmax_p}});
    }
    nlohmann::json j{{"w", w.to_string()},
                     {"C", C},
                     {"D", D},
                     {"residual", residual.to_string()},
                     {"growth_floor", growth_floor},
                     {"grid_n", grid_n},
                     {"levels", lv},
                     {"checks",
                      {{"w_nonnegative", w_nonnegative},
                       {"residual_nonpositive", residual_nonpositive},
                       {"w_k_increasing", w_k_increasing},
                       {"growth_above_floor", growth_ok}}},
                     {"valid", valid}};
    j["witness"] = witness ? nlohmann::json(*witness) : nlohmann::json();
    return j;
}

LyapunovCertificate certify_nonexplosive(const DiffusionModel& model, const MultiPoly& w, const Exhaustion& exhaustion,
                                         double C, double D, int k_max, int grid_n, double growth_floor) {
    if (!model.is_polynomial()) {
        throw UnsupportedError("certify_nonexplosive: the model has non-polynomial coefficients");
    }
    if (w.dim() != model.dim_state() || exhaustion.dim() != model.dim_state()) {
        throw DimensionError("certify_nonexplosive: dimension mismatch");
    }
    if (!(C > 0.0) || !(D > 0.0)) throw UsageError("certify_nonexplosive: C and D must be positive");
    if (k_max < 1 || grid_n < 2) throw UsageError("certify_nonexplosive: need k_max >= 1 and grid_n >= 2");

    LyapunovCertificate cert{w, C, D, MultiPoly(w.dim())};
    cert.growth_floor = growth_floor;
    cert.grid_n = grid_n;
    const MultiPoly Lw = apply_generator(model.drift_poly(), model.diffusion_poly(), w);
    cert.residual = Lw - C * w - MultiPoly::constant(w.dim(), D);

    const auto& c = exhaustion.center();
    const std::size_t m = c.size();
    const bool balls = exhaustion.kind() == Exhaustion::Kind::balls;
    cert.min_w = std::numeric_limits<double>::infinity();
    double worst_p = -std::numeric_limits<double>::infinity();
    std::vector<double> worst_at;
    for (int k = 1; k <= k_max; ++k) {
        const double R = exhaustion.step() * k;
        LyapunovLevel lv;
        lv.k = k;
        lv.max_p = -std::numeric_limits<double>::infinity();
        lv.w_k = std::numeric_limits<double>::infinity();
        for (auto& y : cube_grid(c, R, grid_n)) {
            bool on_surface = false;
            for (std::size_t i = 0; i < m; ++i) {
                on_surface = on_surface || std::abs(std::abs(y[i] - c[i]) - R) <= 1e-12 * (1.0 + R);
            }
            if (on_surface) {
                std::vector<double> s = y;
                if (balls) {
                    const double rr = radial(y.data(), c);
                    for (std::size_t i = 0; i < m; ++i) s[i] = c[i] + (y[i] - c[i]) * (R / rr);
                }
                lv.w_k = std::min(lv.w_k, w(s));
            }
            if (balls && radial(y.data(), c) > R * (1.0 + 1e-12)) continue;
            const double p = cert.residual(y);
            cert.min_w = std::min(cert.min_w, w(y));
            if (p > lv.max_p) {
                lv.max_p = p;
                lv.argmax_p = y;
            }
        }
        if (lv.max_p > worst_p) {
            worst_p = lv.max_p;
            worst_at = lv.argmax_p;
        }
        cert.levels.push_back(std::move(lv));
    }
    cert.w_nonnegative = cert.min_w >= 0.0;
    cert.residual_nonpositive = worst_p <= 0.0;
    cert.w_k_increasing = true;
    for (std::size_t i = 1; i < cert.levels.size(); ++i) {
        cert.w_k_increasing = cert.w_k_increasing && cert.levels[i].w_k > cert.levels[i - 1].w_k;
    }
    cert.growth_ok = cert.levels.back().w_k > growth_floor;
    cert.valid = cert.w_nonnegative && cert.residual_nonpositive && cert.w_k_increasing && cert.growth_ok;
    if (!cert.residual_nonpositive) cert.witness = worst_at;
    return cert;
}

// ------------------------------------------------------------------ cycles

void CycleConfig::validate(std::size_t dim) const {
    if (center.size() != dim) throw DimensionError("CycleConfig: center dimension mismatch");
    if (!(inner_radius > 0.0) || !(outer_radius > inner_radius)) {
        throw UsageError("CycleConfig: need 0 < inner_radius < outer_radius");
    }
}

double CycleSample::censored_fraction() const noexcept {
    const double total = static_cast<double>(completed() + censored_cycles);
    return total > 0 ? static_cast<double>(censored_cycles) / total : 0.0;
}

std::string CycleSample::to_csv() const {
    std::ostringstream os;
    os << "chain,cycle,duration";
    for (std::size_t i = 0; i < dim; ++i) os << ",x" << (i + 1);
    os << '\n';
    std::size_t cycle = 0;
    for (std::size_t k = 0; k < durations.size(); ++k) {
        if (k > 0 && chain[k] != chain[k - 1]) cycle = 0;
        os << chain[k] << ',' << cycle++ << ',' << io::fmt17(durations[k]) << ',' << io::join17(start_points[k])
           << '\n';
    }
    return os.str();
}

CycleSample run_cycles(const DiffusionModel& model, const CycleConfig& cycle, std::size_t n_cycles,
                       const SimConfig& cfg, const std::optional<Grid>& grid, const CycleOptions& opt) {
    cfg.validate();
    const std::size_t m = model.dim_state();
    cycle.validate(m);
    if (grid && grid->dim() != m) throw DimensionError("run_cycles: grid dimension mismatch");
    if (n_cycles == 0 || opt.n_chains == 0) throw UsageError("run_cycles: need at least one cycle and one chain");
    const std::size_t chains = std::min(opt.n_chains, n_cycles);

    struct ChainOut {
        std::vector<std::vector<double>> starts;
        std::vector<double> durations, outside;
        std::vector<std::vector<std::pair<std::uint32_t, double>>> occupation;
        std::size_t censored = 0, exploded = 0;
    };
    std::vector<ChainOut> outs(chains);

    parallel_for(chains, cfg.threads, [&](std::size_t ch) {
        ChainOut& out = outs[ch];
        const std::size_t todo = n_cycles / chains + (ch < n_cycles % chains ? 1 : 0);
        PathStream stream(cfg.seed, ch);
        std::vector<double> x = cycle.center;
        x[0] += cycle.inner_radius;
        std::vector<double> dense(grid ? grid->size() : 0, 0.0);
        std::vector<std::uint32_t> touched;
        struct Occ {
            const Grid* grid;
            std::vector<double>* dense;
            std::vector<std::uint32_t>* touched;
            double outside = 0.0, duration = 0.0;
            void step(double, const double* y, double h) {
                duration += h;
                if (!grid) {
                    outside += h;
                    return;
                }
                if (auto cidx = grid->cell_of(y)) {
                    auto& v = (*dense)[*cidx];
                    if (v == 0.0) touched->push_back(static_cast<std::uint32_t>(*cidx));
                    v += h;
                } else {
                    outside += h;
                }
            }
        };
        for (std::size_t k = 0; k < todo; ++k) {
            const std::vector<double> start = x;
            Occ occ{grid ? &*grid : nullptr, &dense, &touched};
            const SphereHit a =
                run_to_sphere(model, cycle.center, cycle.outer_radius, true, x, 0.0, cfg.horizon, cfg.dt, stream, occ);
            SphereHit b;
            if (a.hit) {
                b = run_to_sphere(model, cycle.center, cycle.inner_radius, false, x, a.time, cfg.horizon, cfg.dt,
                                  stream, occ);
            }
            if (!b.hit) {
                ++out.censored;
                if (a.exploded || b.exploded) ++out.exploded;
                break; // the chain cannot continue from off Gamma_2
            }
            std::sort(touched.begin(), touched.end());
            std::vector<std::pair<std::uint32_t, double>> sparse;
            sparse.reserve(touched.size());
            for (auto cidx : touched) {
                sparse.emplace_back(cidx, dense[cidx]);
                dense[cidx] = 0.0;
            }
            touched.clear();
            out.starts.push_back(start);
            out.durations.push_back(occ.duration);
            out.outside.push_back(occ.outside);
            out.occupation.push_back(std::move(sparse));
        }
    });

    CycleSample s;
    s.dim = m;
    s.config = cycle;
    s.grid = grid;
    s.n_chains = chains;
    for (std::size_t ch = 0; ch < chains; ++ch) {
        auto& o = outs[ch];
        for (std::size_t k = 0; k < o.durations.size(); ++k) {
            s.chain.push_back(static_cast<std::uint32_t>(ch));
            s.start_points.push_back(std::move(o.starts[k]));
            s.durations.push_back(o.durations[k]);
            s.outside.push_back(o.outside[k]);
            s.occupation.push_back(std::move(o.occupation[k]));
        }
        s.censored_cycles += o.censored;
        s.exploded_cycles += o.exploded;
    }
    if (s.completed() == 0) {
        throw EstimationError("run_cycles: no cycle completed within the horizon (transience or horizon too small)",
                              1.0);
    }
    return s;
}

namespace {

// Indices of the cycles kept after dropping burn_in per chain.
std::vector<std::size_t> after_burn_in(const CycleSample& s, std::size_t burn_in) {
    std::vector<std::size_t> keep;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < s.completed(); ++k) {
        pos = (k > 0 && s.chain[k] == s.chain[k - 1]) ? pos + 1 : 0;
        if (pos >= burn_in) keep.push_back(k);
    }
    return keep;
}

// Batch-means standard error over chains of a per-chain ratio num/den.
double chain_stderr(const std::vector<double>& num, const std::vector<double>& den) {
    std::vector<double> ratios;
    for (std::size_t c = 0; c < num.size(); ++c) {
        if (den[c] > 0.0) ratios.push_back(num[c] / den[c]);
    }
    if (ratios.size() < 2) return 0.0;
    return summarize(ratios).std_error;
}

} // namespace

nlohmann::json ChainMeasure::to_json() const {
    return {{"binning", binning}, {"edges", edges}, {"mass", mass}, {"stderr", std_error}, {"n_used", n_used}};
}

ChainMeasure embedded_chain_stationary(const CycleSample& samples, std::size_t burn_in, std::size_t n_bins) {
    const auto keep = after_burn_in(samples, burn_in);
    if (keep.empty()) throw EstimationError("embedded_chain_stationary: no cycles left after burn-in", 0.0);
    const auto& c = samples.config.center;
    const double R = samples.config.inner_radius;
    const std::size_t m = samples.dim;

    ChainMeasure cm;
    if (m == 1) {
        cm.binning = "sign";
        cm.edges = {c[0] - R, c[0], c[0] + R};
        n_bins = 2;
    } else if (m == 2) {
        if (n_bins == 0) throw UsageError("embedded_chain_stationary: n_bins must be positive");
        cm.binning = "angle";
        for (std::size_t i = 0; i <= n_bins; ++i) {
            cm.edges.push_back(-std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(i) / n_bins);
        }
    } else {
        if (n_bins == 0) throw UsageError("embedded_chain_stationary: n_bins must be positive");
        cm.binning = "first-coordinate";
        for (std::size_t i = 0; i <= n_bins; ++i) cm.edges.push_back(c[0] - R + 2.0 * R * static_cast<double>(i) / n_bins);
    }
    auto bin_of = [&](const std::vector<double>& x) -> std::size_t {
        double v;
        if (m == 1) return x[0] < c[0] ? 0 : 1;
        if (m == 2) {
            v = (std::atan2(x[1] - c[1], x[0] - c[0]) + std::numbers::pi) / (2.0 * std::numbers::pi);
        } else {
            v = (x[0] - c[0] + R) / (2.0 * R);
        }
        return std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, v) * static_cast<double>(n_bins)));
    };

    cm.mass.assign(n_bins, 0.0);
    std::vector<std::vector<double>> per_chain(n_bins, std::vector<double>(samples.n_chains, 0.0));
    std::vector<double> chain_n(samples.n_chains, 0.0);
    for (auto k : keep) {
        const std::size_t b = bin_of(samples.start_points[k]);
        cm.mass[b] += 1.0;
        per_chain[b][samples.chain[k]] += 1.0;
        chain_n[samples.chain[k]] += 1.0;
    }
    for (auto& v : cm.mass) v /= static_cast<double>(keep.size());
    for (std::size_t b = 0; b < n_bins; ++b) cm.std_error.push_back(chain_stderr(per_chain[b], chain_n));
    cm.n_used = keep.size();
    return cm;
}

double InvariantMeasureEstimate::total_mass() const {
    double s = mu_tilde_outside;
    for (double v : mu_tilde) s += v;
    return s;
}

std::string InvariantMeasureEstimate::to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < grid.dim(); ++i) os << 'c' << (i + 1) << ',';
    os << "mu_tilde,stderr,density\n";
    const double vol = grid.cell_volume();
    for (std::size_t k = 0; k < mu_tilde.size(); ++k) {
        os << io::join17(grid.center(k)) << ',' << io::fmt17(mu_tilde[k]) << ',' << io::fmt17(std_error[k]) << ','
           << io::fmt17(mu_tilde[k] / vol) << '\n';
    }
    return os.str();
}

InvariantMeasureEstimate estimate_invariant_measure(const CycleSample& samples, std::size_t burn_in,
                                                    std::size_t min_cycles) {
    if (!samples.grid) throw UsageError("estimate_invariant_measure: the cycles were run without a grid");
    const auto keep = after_burn_in(samples, burn_in);
    if (keep.size() < std::max<std::size_t>(min_cycles, 1)) {
        throw EstimationError("estimate_invariant_measure: " + std::to_string(keep.size()) +
                                  " cycles after burn-in, need " + std::to_string(min_cycles),
                              samples.censored_fraction());
    }
    const Grid& grid = *samples.grid;
    const std::size_t cells = grid.size();
    InvariantMeasureEstimate est{grid, std::vector<double>(cells, 0.0)};
    std::vector<std::vector<double>> chain_mass(cells, std::vector<double>(samples.n_chains, 0.0));
    std::vector<double> chain_time(samples.n_chains, 0.0);
    double total_time = 0.0;
    for (auto k : keep) {
        for (const auto& [cidx, t] : samples.occupation[k]) {
            est.mu[cidx] += t;
            chain_mass[cidx][samples.chain[k]] += t;
        }
        est.mu_outside += samples.outside[k];
        total_time += samples.durations[k];
        chain_time[samples.chain[k]] += samples.durations[k];
    }
    const double n = static_cast<double>(keep.size());
    for (auto& v : est.mu) v /= n;
    est.mu_outside /= n;
    est.normalizer = total_time / n;
    est.mu_tilde.resize(cells);
    for (std::size_t k = 0; k < cells; ++k) est.mu_tilde[k] = est.mu[k] / est.normalizer;
    est.mu_tilde_outside = est.mu_outside / est.normalizer;
    for (std::size_t k = 0; k < cells; ++k) est.std_error.push_back(chain_stderr(chain_mass[k], chain_time));
    est.cycles_used = keep.size();
    return est;
}

double l1_distance(const InvariantMeasureEstimate& a, std::span<const double> p, double outside) {
    if (p.size() != a.mu_tilde.size()) throw DimensionError("l1_distance: cell count mismatch");
    double s = std::abs(a.mu_tilde_outside - outside);
    for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(a.mu_tilde[k] - p[k]);
    return s;
}

double l1_distance(const InvariantMeasureEstimate& a, const InvariantMeasureEstimate& b) {
    return l1_distance(a, b.mu_tilde, b.mu_tilde_outside);
}

// -------------------------------------------------------------- recurrence

const char* to_string(RecurrenceVerdict v) noexcept {
    switch (v) {
    case RecurrenceVerdict::transient_evidence: return "transient-evidence";
    case RecurrenceVerdict::positive_recurrent_evidence: return "positive-recurrent-evidence";
    case RecurrenceVerdict::null_recurrent_evidence: return "null-recurrent-evidence";
    case RecurrenceVerdict::inconclusive: return "inconclusive";
    }
    return "?";
}

nlohmann::json RecurrenceReport::to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : starts) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : s.rows) {
            rows.push_back({{"horizon", r.horizon},
                            {"hit_probability", r.hit_probability.to_json()},
                            {"conditional_mean", r.conditional_mean.to_json()}});
        }
        st.push_back({{"start", s.start}, {"rows", rows}, {"verdict", to_string(s.verdict)}, {"reason", s.reason}});
    }
    return {{"center", center}, {"radius", radius}, {"starts", st}, {"verdict", to_string(verdict)}};
}

std::string RecurrenceReport::to_csv() const {
    std::ostringstream os;
    const std::size_t m = center.size();
    for (std::size_t i = 0; i < m; ++i) os << 'x' << (i + 1) << ',';
    os << "horizon,hit_probability,stderr,conditional_mean,conditional_stderr,n_hit\n";
    for (const auto& s : starts) {
        for (const auto& r : s.rows) {
            os << io::join17(s.start) << ',' << io::fmt17(r.horizon) << ',' << io::fmt17(r.hit_probability.mean) << ','
               << io::fmt17(r.hit_probability.std_error) << ',' << io::fmt17(r.conditional_mean.mean) << ','
               << io::fmt17(r.conditional_mean.std_error) << ',' << r.conditional_mean.n << '\n';
        }
    }
    return os.str();
}

RecurrenceReport classify_recurrence(const DiffusionModel& model, std::span<const double> center, double radius,
                                     const std::vector<std::vector<double>>& starts,
                                     std::span<const double> horizons, std::size_t n_paths, const SimConfig& cfg,
                                     const RecurrenceOptions& opt) {
    cfg.validate();
    const std::size_t m = model.dim_state();
    if (center.size() != m) throw DimensionError("classify_recurrence: center dimension mismatch");
    if (!(radius > 0.0)) throw UsageError("classify_recurrence: radius must be positive");
    if (starts.empty() || horizons.size() < 2 || n_paths < 2) {
        throw UsageError("classify_recurrence: need start points, at least two horizons and two paths");
    }
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (!(horizons[i] > 0.0) || (i > 0 && !(horizons[i] > horizons[i - 1]))) {
            throw UsageError("classify_recurrence: horizons must be positive and increasing");
        }
    }
    const std::vector<double> c(center.begin(), center.end());

    RecurrenceReport rep;
    rep.center = c;
    rep.radius = radius;
    for (const auto& x0 : starts) {
        if (x0.size() != m) throw DimensionError("classify_recurrence: start dimension mismatch");
        if (radial(x0.data(), c) <= radius) throw UsageError("classify_recurrence: start points must lie outside B");
        std::vector<double> hit_time(n_paths);
        parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
            PathStream stream(cfg.seed, i);
            std::vector<double> x = x0;
            NoObs obs;
            const SphereHit h = run_to_sphere(model, c, radius, false, x, 0.0, horizons.back(), cfg.dt, stream, obs);
            hit_time[i] = h.hit ? h.time : std::numeric_limits<double>::infinity();
        });

        StartReport sr;
        sr.start = x0;
        const double n = static_cast<double>(n_paths);
        for (double T : horizons) {
            HitRow row;
            row.horizon = T;
            std::vector<double> hits;
            for (double t : hit_time) {
                if (t <= T) hits.push_back(t);
            }
            row.hit_probability.n = n_paths;
            row.hit_probability.mean = static_cast<double>(hits.size()) / n;
            row.hit_probability.std_error =
                std::sqrt(row.hit_probability.mean * (1.0 - row.hit_probability.mean) / (n - 1.0));
            if (!hits.empty()) row.conditional_mean = summarize(hits);
            sr.rows.push_back(row);
        }

        const auto& last = sr.rows.back();
        const auto& prev = sr.rows[sr.rows.size() - 2];
        const double p = last.hit_probability.mean;
        const double q = p - prev.hit_probability.mean;
        const double se_q = std::sqrt(std::max(q * (1.0 - q), 0.0) / n);
        const bool reaches_one = p >= 1.0 - opt.recurrence_tolerance;
        const bool rising = q > 3.0 * se_q && q > 0.0;
        const double ratio = prev.conditional_mean.n > 0 && prev.conditional_mean.mean > 0.0
                                 ? last.conditional_mean.mean / prev.conditional_mean.mean
                                 : std::numeric_limits<double>::quiet_NaN();
        std::ostringstream why;
        why << "P(hit by T) = " << io::fmt17(p) << ", last increment " << io::fmt17(q) << ", conditional-mean ratio "
            << io::fmt17(ratio);
        if (reaches_one && ratio <= opt.divergence_ratio) {
            sr.verdict = RecurrenceVerdict::positive_recurrent_evidence;
        } else if (ratio > opt.divergence_ratio && (rising || reaches_one)) {
            sr.verdict = RecurrenceVerdict::null_recurrent_evidence;
        } else if (!reaches_one && q <= std::max(3.0 * se_q, opt.plateau_min)) {
            sr.verdict = RecurrenceVerdict::transient_evidence;
        }
        sr.reason = why.str();
        rep.starts.push_back(std::move(sr));
    }
    rep.verdict = rep.starts.front().verdict;
    for (const auto& s : rep.starts) {
        if (s.verdict != rep.verdict) rep.verdict = RecurrenceVerdict::inconclusive;
    }
    return rep;
}

// ------------------------------------------------- exponential exit moments

nlohmann::json ExpExitReport::to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& row : rows) {
        r.push_back({{"delta", row.delta},
                     {"sup_estimate", row.sup_estimate},
                     {"argsup", row.argsup},
                     {"stderr", row.std_error},
                     {"tail_share", row.tail_share},
                     {"censor_dominated", row.censor_dominated}});
    }
    nlohmann::json j{{"rows", r}, {"tail_threshold", tail_threshold}, {"all_censored", all_censored}};
    j["largest_finite_delta"] = largest_finite_delta ? nlohmann::json(*largest_finite_delta) : nlohmann::json();
    return j;
}

ExpExitReport estimate_exp_exit_bound(const DiffusionModel& model, const Domain& Ubar,
                                      std::span<const double> deltas, const std::vector<std::vector<double>>& starts,
                                      std::size_t n_paths, const SimConfig& cfg, double tail_threshold) {
    cfg.validate();
    if (!Ubar.bounded()) throw UsageError("estimate_exp_exit_bound: the domain must be bounded");
    if (deltas.empty() || starts.empty() || n_paths == 0) {
        throw UsageError("estimate_exp_exit_bound: need deltas, start points and paths");
    }
    if (!(tail_threshold > 0.0 && tail_threshold < 1.0)) {
        throw UsageError("estimate_exp_exit_bound: tail_threshold must lie in (0, 1)");
    }
    const double T = cfg.horizon;
    // Exit times from the closure per start; +inf when censored.
    std::vector<std::vector<double>> taus;
    std::size_t censored = 0;
    for (const auto& x : starts) {
        if (x.size() != model.dim_state()) throw DimensionError("estimate_exp_exit_bound: start dimension mismatch");
        const TrajectoryBatch batch = simulate_batch(model, Ubar, x, cfg, n_paths);
        std::vector<double> t(n_paths);
        for (std::size_t i = 0; i < n_paths; ++i) {
            const auto& r = batch.records[i];
            t[i] = r.closure_exit_time ? *r.closure_exit_time : std::numeric_limits<double>::infinity();
            censored += std::isinf(t[i]) ? 1 : 0;
        }
        taus.push_back(std::move(t));
    }

    ExpExitReport rep;
    rep.tail_threshold = tail_threshold;
    rep.all_censored = censored == starts.size() * n_paths;
    for (double delta : deltas) {
        ExpExitRow row;
        row.delta = delta;
        row.sup_estimate = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < starts.size(); ++s) {
            std::vector<double> v(n_paths);
            double tail = 0.0, all = 0.0;
            for (std::size_t i = 0; i < n_paths; ++i) {
                v[i] = delta == 0.0 ? 1.0 : std::exp(delta * std::min(taus[s][i], T));
                all += v[i];
                if (taus[s][i] > 0.5 * T) tail += v[i];
            }
            const MCEstimate e = summarize(v);
            const double share = delta == 0.0 ? 0.0 : tail / all;
            if (e.mean > row.sup_estimate) {
                row.sup_estimate = e.mean;
                row.argsup = starts[s];
                row.std_error = e.std_error;
            }
            row.tail_share = std::max(row.tail_share, share);
        }
        row.censor_dominated = delta > 0.0 && row.tail_share > tail_threshold;
        if (!row.censor_dominated && (!rep.largest_finite_delta || delta > *rep.largest_finite_delta)) {
            rep.largest_finite_delta = delta;
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace stochar
