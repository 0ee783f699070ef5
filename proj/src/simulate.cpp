#include "stochar/simulate.hpp"

#include "stochar/io.hpp"
#include "stochar/parallel.hpp"

#include <algorithm>
#include <sstream>

namespace stochar {

const char* to_string(ExitKind k) noexcept {
    switch (k) {
    case ExitKind::exited_U: return "exited_U";
    case ExitKind::exited_closure: return "exited_closure";
    case ExitKind::censored: return "censored";
    }
    return "?";
}

double TrajectoryBatch::censored_fraction() const {
    if (records.empty()) return 0.0;
    const auto c = std::count_if(records.begin(), records.end(), [](const ExitRecord& r) { return r.censored(); });
    return static_cast<double>(c) / static_cast<double>(records.size());
}

std::size_t TrajectoryBatch::exploded_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const ExitRecord& r) { return r.exploded; }));
}

double TrajectoryBatch::explosion_fraction() const {
    return records.empty() ? 0.0 : static_cast<double>(exploded_count()) / static_cast<double>(records.size());
}

std::vector<double> step_em(const DiffusionModel& model, std::span<const double> x, double dt,
                            std::span<const double> gaussians) {
    const std::size_t m = model.dim_state(), r = model.dim_noise();
    if (x.size() != m || gaussians.size() != r) throw DimensionError("step_em: dimension mismatch");
    if (!(dt >= 0.0)) throw UsageError("step_em: dt must be nonnegative");
    std::vector<double> b(m), s(m * r), out(m);
    model.drift(x.data(), b.data());
    model.sigma(x.data(), s.data());
    const double sq = std::sqrt(dt);
    for (std::size_t i = 0; i < m; ++i) {
        double noise = 0.0;
        for (std::size_t k = 0; k < r; ++k) noise += s[i * r + k] * gaussians[k];
        out[i] = x[i] + b[i] * dt + noise * sq;
    }
    return out;
}

ExitRecord simulate_stopped(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                            const SimConfig& cfg, PathStream& stream) {
    cfg.validate();
    if (x0.size() != model.dim_state() || U.dim() != model.dim_state()) {
        throw DimensionError("simulate_stopped: dimension mismatch");
    }
    detail::NullObserver obs;
    return detail::run_path(model, U, x0, cfg, stream, obs).record;
}

ExitTimes exit_time_triple(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                           const SimConfig& cfg, PathStream& stream) {
    const ExitRecord rec = simulate_stopped(model, U, x0, cfg, stream);
    ExitTimes out;
    out.boundary_start = rec.boundary_start;
    out.exploded = rec.exploded;
    out.tau = rec.exit_time;
    out.tau0 = rec.first_exit_time();
    out.tau_bar = rec.closure_exit_time;
    return out;
}

TrajectoryBatch simulate_batch(const DiffusionModel& model, const Domain& U, std::span<const double> x0,
                               const SimConfig& cfg, std::size_t n_paths, std::uint64_t first_index) {
    cfg.validate();
    if (x0.size() != model.dim_state() || U.dim() != model.dim_state()) {
        throw DimensionError("simulate_batch: dimension mismatch");
    }
    if (U.membership(x0) == Membership::exterior) {
        throw UsageError("simulate_batch: start point lies outside the closure of U");
    }
    TrajectoryBatch batch;
    batch.n_paths = n_paths;
    batch.seed = cfg.seed;
    batch.first_index = first_index;
    batch.records.resize(n_paths);
    parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
        PathStream stream(cfg.seed, first_index + i);
        detail::NullObserver obs;
        batch.records[i] = detail::run_path(model, U, x0, cfg, stream, obs).record;
    });
    return batch;
}

std::string batch_to_csv(const TrajectoryBatch& batch, std::size_t dim) {
    std::ostringstream os;
    os << "path_index,exit_time,exit_kind";
    for (std::size_t i = 0; i < dim; ++i) os << ",x" << (i + 1);
    os << ",censored\n";
    for (std::size_t k = 0; k < batch.records.size(); ++k) {
        const auto& r = batch.records[k];
        os << (batch.first_index + k) << ',' << (r.exit_time ? io::fmt17(*r.exit_time) : "") << ','
           << to_string(r.kind);
        for (std::size_t i = 0; i < dim; ++i) os << ',' << (r.exit_point ? io::fmt17((*r.exit_point)[i]) : "");
        os << ',' << (r.censored() ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string paths_to_csv(const TrajectoryBatch& batch, std::size_t dim) {
    std::ostringstream os;
    os << "path_index,t";
    for (std::size_t i = 0; i < dim; ++i) os << ",x" << (i + 1);
    os << '\n';
    for (std::size_t k = 0; k < batch.records.size(); ++k) {
        const auto& p = batch.records[k].path;
        for (std::size_t row = 0; row + dim < p.size(); row += dim + 1) {
            os << (batch.first_index + k) << ',' << io::join17({p.data() + row, dim + 1}) << '\n';
        }
    }
    return os.str();
}

namespace detail {

namespace {

double normal_variance(const double* n, const double* sigma, std::size_t m, std::size_t r) {
    double a = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < m; ++i) v += n[i] * sigma[i * r + k];
        a += v * v;
    }
    return a;
}

// P(Brownian bridge crosses a flat face) = exp(-2 d d' / (a_nn h)).
double crossing_probability(double d, double dn, double ann, double h) {
    if (!(ann > 0.0)) return 0.0;
    const double arg = 2.0 * std::max(d, 0.0) * std::max(dn, 0.0) / (ann * h);
    return arg > 60.0 ? 0.0 : std::exp(-arg);
}

} // namespace

BridgeHit bridge_probability(const Domain& U, const double* x, const double* xn, const double* sigma,
                             std::size_t m, std::size_t r, double h) {
    BridgeHit hit;
    if (const auto* box = std::get_if<BoxShape>(&U.shape())) {
        double survive = 1.0, best = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double ann = 0.0;
            for (std::size_t k = 0; k < r; ++k) ann += sigma[i * r + k] * sigma[i * r + k];
            if (!(ann > 0.0)) continue;
            for (int upper = 0; upper < 2; ++upper) {
                const double bound = upper ? box->hi[i] : box->lo[i];
                if (!std::isfinite(bound)) continue;
                const double d = upper ? bound - x[i] : x[i] - bound;
                const double dn = upper ? bound - xn[i] : xn[i] - bound;
                const double p = crossing_probability(d, dn, ann, h);
                if (p <= 0.0) continue;
                survive *= 1.0 - p;
                if (p > best) {
                    best = p;
                    hit.face = static_cast<int>(2 * i) + upper;
                }
            }
        }
        hit.probability = 1.0 - survive;
        return hit;
    }
    std::vector<double> n(m);
    double d = 0.0, dn = 0.0;
    if (const auto* ball = std::get_if<BallShape>(&U.shape())) {
        double rho = 0.0, rhon = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            n[i] = x[i] - ball->center[i];
            rho += n[i] * n[i];
            rhon += (xn[i] - ball->center[i]) * (xn[i] - ball->center[i]);
        }
        rho = std::sqrt(rho);
        if (rho == 0.0) {
            n[0] = 1.0;
        } else {
            for (auto& v : n) v /= rho;
        }
        d = ball->radius - rho;
        dn = ball->radius - std::sqrt(rhon);
    } else if (const auto* hs = std::get_if<HalfspaceShape>(&U.shape())) {
        double nn = 0.0, s = 0.0, sn = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            nn += hs->normal[i] * hs->normal[i];
            s += hs->normal[i] * x[i];
            sn += hs->normal[i] * xn[i];
        }
        nn = std::sqrt(nn);
        for (std::size_t i = 0; i < m; ++i) n[i] = hs->normal[i] / nn;
        d = (hs->offset - s) / nn;
        dn = (hs->offset - sn) / nn;
    } else {
        return hit;
    }
    hit.probability = crossing_probability(d, dn, normal_variance(n.data(), sigma, m, r), h);
    hit.face = 0;
    return hit;
}

void place_on_face(const Domain& U, int face, double* xn, std::size_t m) {
    if (const auto* box = std::get_if<BoxShape>(&U.shape())) {
        const auto axis = static_cast<std::size_t>(face / 2);
        xn[axis] = face % 2 ? box->hi[axis] : box->lo[axis];
        return;
    }
    if (auto p = U.project_to_boundary({xn, m})) std::copy(p->begin(), p->end(), xn);
}

double crossing_fraction(const Domain& U, const double* x, const double* xn, std::size_t m) {
    double frac = 1.0;
    if (const auto* box = std::get_if<BoxShape>(&U.shape())) {
        for (std::size_t i = 0; i < m; ++i) {
            if (xn[i] < box->lo[i] && x[i] > xn[i]) frac = std::min(frac, (x[i] - box->lo[i]) / (x[i] - xn[i]));
            if (xn[i] > box->hi[i] && xn[i] > x[i]) frac = std::min(frac, (box->hi[i] - x[i]) / (xn[i] - x[i]));
        }
        return std::clamp(frac, 0.0, 1.0);
    }
    auto level = [&](const double* p) -> double {
        if (const auto* ball = std::get_if<BallShape>(&U.shape())) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += (p[i] - ball->center[i]) * (p[i] - ball->center[i]);
            return std::sqrt(s) - ball->radius;
        }
        if (const auto* hs = std::get_if<HalfspaceShape>(&U.shape())) {
            double s = 0.0, nn = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                s += hs->normal[i] * p[i];
                nn += hs->normal[i] * hs->normal[i];
            }
            return (s - hs->offset) / std::sqrt(nn);
        }
        if (const auto* sl = std::get_if<SublevelShape>(&U.shape())) return sl->p({p, m});
        return 0.0;
    };
    if (std::holds_alternative<FullSpace>(U.shape())) return 1.0;
    const double g0 = level(x), g1 = level(xn);
    if (!(g1 > g0)) return 1.0;
    return std::clamp(-g0 / (g1 - g0), 0.0, 1.0);
}

std::vector<double> exit_point_for(const Domain& U, const double* xn, std::size_t m) {
    if (U.has_flat_faces()) {
        if (auto p = U.project_to_boundary({xn, m})) return *p;
    }
    return {xn, xn + m};
}

} // namespace detail

} // namespace stochar
