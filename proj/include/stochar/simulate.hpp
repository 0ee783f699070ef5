#pragma once

#include "stochar/config.hpp"
#include "stochar/domain.hpp"
#include "stochar/error.hpp"
#include "stochar/model.hpp"
#include "stochar/rng.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stochar {

enum class ExitKind {
    exited_U,       // stopped on the boundary of U without leaving the closure
    exited_closure, // left the closure (or bridge-detected crossing, or explosion)
    censored,       // reached the horizon inside U
};

const char* to_string(ExitKind k) noexcept;

/// Outcome of one stopped path.
///
/// exit_time is the first positive exit time tau from U; for interior starts
/// it equals tau0. closure_exit_time is tau-bar, the first time outside the
/// closure, tracked past tau0 when the path stopped exactly on the boundary.
struct ExitRecord {
    ExitKind kind = ExitKind::censored;
    std::optional<double> exit_time;
    std::optional<std::vector<double>> exit_point;
    std::optional<double> closure_exit_time;
    bool boundary_start = false;
    bool exploded = false;
    bool bridge_exit = false;
    // Where the stopped path ended: the exit point, or the state at the horizon.
    std::vector<double> terminal_state;
    // Flattened rows (t, x_1..x_m) when SimConfig::store_path is set.
    std::vector<double> path;

    bool censored() const noexcept { return kind == ExitKind::censored; }
    // tau0: 0 for boundary starts, tau otherwise.
    std::optional<double> first_exit_time() const {
        if (boundary_start) return 0.0;
        return exit_time;
    }
};

struct TrajectoryBatch {
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::uint64_t first_index = 0; // records[k] used stream first_index + k
    std::vector<ExitRecord> records;

    double censored_fraction() const;
    double explosion_fraction() const;
    std::size_t exploded_count() const;
};

/// One Euler-Maruyama step: x + b(x) dt + sigma(x) sqrt(dt) z.
std::vector<double> step_em(const DiffusionModel& model, std::span<const double> x, double dt,
                            std::span<const double> gaussians);

/// Simulates one path of the stopped process from x0 (which must lie in the
/// closure of U). Draw order per step: r normals, then one uniform for the
/// bridge test when bridge correction is active for this domain.
ExitRecord simulate_stopped(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                            const SimConfig& cfg, PathStream& stream);

struct ExitTimes {
    std::optional<double> tau;     // first t > 0 outside U
    std::optional<double> tau0;    // first t >= 0 outside U
    std::optional<double> tau_bar; // first t >= 0 outside the closure
    bool boundary_start = false;
    bool exploded = false;
};

ExitTimes exit_time_triple(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                           const SimConfig& cfg, PathStream& stream);

/// n_paths independent paths; path k uses stream (cfg.seed, first_index + k).
TrajectoryBatch simulate_batch(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                               const SimConfig& cfg, std::size_t n_paths, std::uint64_t first_index = 0);

/// CSV: path_index,exit_time,exit_kind,x1..xm,censored
std::string batch_to_csv(const TrajectoryBatch& batch, std::size_t dim);
/// CSV: path_index,t,x1..xm for every stored path row.
std::string paths_to_csv(const TrajectoryBatch& batch, std::size_t dim);

inline constexpr double kExplosionNorm = 1e12;

namespace detail {

// Exterior-normal geometry for the bridge test and for placing exit points.
struct BridgeHit {
    double probability = 0.0;
    int face = -1; // box: 2*axis + (upper ? 1 : 0); ball/halfspace: 0
};

BridgeHit bridge_probability(const Domain& U, const double* x, const double* xn, const double* sigma,
                             std::size_t m, std::size_t r, double h);

// Moves xn onto the boundary face selected by the bridge test.
void place_on_face(const Domain& U, int face, double* xn, std::size_t m);

// Fraction in [0,1] of the step from x (inside) to xn (outside) at which the
// boundary is crossed, by linear interpolation of the distance to it.
double crossing_fraction(const Domain& U, const double* x, const double* xn, std::size_t m);

// Exit point for a step that landed outside: projection for flat-faced
// domains, the raw state otherwise.
std::vector<double> exit_point_for(const Domain& U, const double* xn, std::size_t m);

inline bool exploded(const double* x, std::size_t m) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!std::isfinite(x[i])) return true;
        s += x[i] * x[i];
    }
    return !(s <= kExplosionNorm * kExplosionNorm);
}

struct NullObserver {
    bool step(double, const double*, double) noexcept { return true; }
};

struct PathResult {
    ExitRecord record;
    bool interrupted = false; // observer asked to stop
};

/// The stepping loop shared by every estimator. The observer's
/// step(t, x, h) is called once per step of the stopped process with the
/// left-endpoint state x and the step length h actually covered before the
/// process stopped (the final step is shortened to the exit time). Returning
/// false ends the path immediately.
template <class Observer>
PathResult run_path(const DiffusionModel& model, const Domain& U, std::span<const double> x0, const SimConfig& cfg,
                    PathStream& stream, Observer& obs) {
    const std::size_t m = model.dim_state();
    const std::size_t r = model.dim_noise();
    const Membership start = U.membership(x0);
    if (start == Membership::exterior) throw UsageError("simulate: start point lies outside the closure of U");

    PathResult out;
    ExitRecord& rec = out.record;
    rec.boundary_start = start == Membership::boundary;

    std::vector<double> x(x0.begin(), x0.end()), xn(m), b(m), s(m * r), z(r);
    const bool bridge = cfg.bridge_correction && U.has_flat_faces();
    const bool drift_zero = model.drift_is_zero();
    const bool sigma_const = model.sigma_is_constant();
    if (sigma_const) model.sigma(x.data(), s.data());
    if (drift_zero) std::fill(b.begin(), b.end(), 0.0);

    enum class Phase { awaiting_entry, running, tracking_closure };
    Phase phase = rec.boundary_start ? Phase::awaiting_entry : Phase::running;

    auto store = [&](double t, const double* p) {
        rec.path.push_back(t);
        rec.path.insert(rec.path.end(), p, p + m);
    };
    if (cfg.store_path) store(0.0, x.data());

    // Fixed steps t_k = k dt; an exit located after the horizon counts as
    // censored, so a longer horizon only ever extends the same path.
    const double horizon = cfg.horizon;
    const double h = cfg.dt;
    const double sqh = std::sqrt(h);
    const auto n_steps = static_cast<std::uint64_t>(std::ceil(horizon / h - 1e-9));
    double t = 0.0;
    for (std::uint64_t step = 0; step < n_steps; ++step) {
        t = static_cast<double>(step) * h;
        const double tn = static_cast<double>(step + 1) * h;
        // Observer sees at most up to the horizon.
        const double covered = std::min(h, horizon - t);
        if (!drift_zero) model.drift(x.data(), b.data());
        if (!sigma_const) model.sigma(x.data(), s.data());
        for (std::size_t k = 0; k < r; ++k) z[k] = stream.normal();
        for (std::size_t i = 0; i < m; ++i) {
            double noise = 0.0;
            for (std::size_t k = 0; k < r; ++k) noise += s[i * r + k] * z[k];
            xn[i] = x[i] + b[i] * h + noise * sqh;
        }
        const double u = bridge ? stream.uniform() : 1.0;

        if (exploded(xn.data(), m)) {
            if (phase != Phase::tracking_closure) {
                if (!obs.step(t, x.data(), covered)) {
                    out.interrupted = true;
                    rec.terminal_state = x;
                    return out;
                }
                rec.kind = ExitKind::exited_closure;
                rec.exit_time = tn;
                rec.exit_point = xn;
                rec.terminal_state = xn;
            }
            rec.exploded = true;
            rec.closure_exit_time = tn;
            if (cfg.store_path) store(tn, xn.data());
            return out;
        }

        const Membership mem = U.membership(xn);
        double exit_at = -1.0;
        bool leaves_closure = false;
        int face = -1;
        if (mem == Membership::exterior) {
            exit_at = t + h * crossing_fraction(U, x.data(), xn.data(), m);
            leaves_closure = true;
        } else if (bridge && mem == Membership::interior) {
            const BridgeHit hit = bridge_probability(U, x.data(), xn.data(), s.data(), m, r, h);
            if (u < hit.probability) {
                exit_at = t + 0.5 * h;
                leaves_closure = true;
                face = hit.face;
            }
        }
        // A crossing located after the horizon is not observed.
        if (leaves_closure && exit_at > horizon) leaves_closure = false;

        if (phase == Phase::tracking_closure) {
            if (leaves_closure) {
                rec.closure_exit_time = exit_at;
                return out;
            }
            if (mem == Membership::exterior) break; // beyond the horizon
            x.swap(xn);
            continue;
        }

        if (leaves_closure) {
            if (!obs.step(t, x.data(), exit_at - t)) {
                out.interrupted = true;
                rec.terminal_state = x;
                return out;
            }
            if (face >= 0) {
                place_on_face(U, face, xn.data(), m);
                rec.bridge_exit = true;
                rec.exit_point = xn;
            } else {
                rec.exit_point = exit_point_for(U, xn.data(), m);
            }
            rec.kind = ExitKind::exited_closure;
            rec.exit_time = exit_at;
            rec.closure_exit_time = exit_at;
            rec.terminal_state = *rec.exit_point;
            if (cfg.store_path) store(exit_at, rec.exit_point->data());
            return out;
        }

        if (!obs.step(t, x.data(), covered)) {
            out.interrupted = true;
            rec.terminal_state = x;
            return out;
        }
        if (tn > horizon && mem != Membership::interior) {
            // Landed on or beyond the boundary after the horizon.
            break;
        }
        if (cfg.store_path && ((step + 1) % cfg.path_stride == 0 || mem == Membership::boundary)) {
            store(tn, xn.data());
        }

        if (mem == Membership::boundary) {
            if (phase == Phase::running) {
                // Stopped exactly on the boundary: tau0 is reached, keep
                // stepping only to locate tau-bar.
                rec.kind = ExitKind::exited_U;
                rec.exit_time = tn;
                rec.exit_point = xn;
                rec.terminal_state = xn;
                phase = Phase::tracking_closure;
            }
        } else {
            phase = Phase::running;
        }
        x.swap(xn);
        t = tn;
    }
    if (phase != Phase::tracking_closure) {
        rec.kind = ExitKind::censored;
        rec.terminal_state = x;
        if (cfg.store_path && rec.path[rec.path.size() - m - 1] != t) store(t, x.data());
    }
    return out;
}

} // namespace detail

} // namespace stochar
