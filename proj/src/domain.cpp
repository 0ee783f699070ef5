#include "stochar/domain.hpp"

#include "stochar/error.hpp"
#include "stochar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stochar {

namespace {

constexpr double kRelTol = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double sublevel_scale(const MultiPoly& p, std::span<const double> x) {
    double s = 0.0;
    for (const auto& [e, c] : p.terms()) {
        double t = std::abs(c);
        for (std::size_t i = 0; i < e.size(); ++i) t *= std::pow(std::abs(x[i]), e[i]);
        s += t;
    }
    return s;
}

} // namespace

const char* to_string(Membership m) noexcept {
    switch (m) {
    case Membership::interior: return "interior";
    case Membership::boundary: return "boundary";
    case Membership::exterior: return "exterior";
    }
    return "?";
}

Domain Domain::box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.empty() || lo.size() != hi.size()) throw DimensionError("box: lo/hi must have equal positive length");
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i])) throw UsageError("box: lo must be < hi on every axis");
    }
    const std::size_t dim = lo.size();
    return Domain(dim, BoxShape{std::move(lo), std::move(hi)});
}

Domain Domain::ball(std::vector<double> center, double radius) {
    if (center.empty()) throw DimensionError("ball: empty center");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw UsageError("ball: radius must be positive and finite");
    const std::size_t dim = center.size();
    return Domain(dim, BallShape{std::move(center), radius});
}

Domain Domain::halfspace(std::vector<double> normal, double offset) {
    if (normal.empty()) throw DimensionError("halfspace: empty normal");
    if (norm(normal) == 0.0) throw UsageError("halfspace: zero normal");
    const std::size_t dim = normal.size();
    return Domain(dim, HalfspaceShape{std::move(normal), offset});
}

Domain Domain::sublevel(MultiPoly p) {
    const std::size_t dim = p.dim();
    return Domain(dim, SublevelShape{std::move(p)});
}

Domain Domain::full(std::size_t dim) {
    if (dim == 0) throw DimensionError("full: dimension must be positive");
    return Domain(dim, FullSpace{});
}

std::string Domain::kind_name() const {
    return std::visit(overloaded{[](const BoxShape&) { return "box"; }, [](const BallShape&) { return "ball"; },
                                 [](const HalfspaceShape&) { return "halfspace"; },
                                 [](const SublevelShape&) { return "sublevel"; }, [](const FullSpace&) { return "full"; }},
                      shape_);
}

Membership Domain::membership(std::span<const double> x) const {
    if (x.size() != dim_) throw DimensionError("membership: point dimension mismatch");
    return std::visit(
        overloaded{
            [&](const BoxShape& b) {
                bool on_face = false;
                for (std::size_t i = 0; i < dim_; ++i) {
                    if (x[i] < b.lo[i] || x[i] > b.hi[i] || std::isnan(x[i])) return Membership::exterior;
                    if (x[i] == b.lo[i] || x[i] == b.hi[i]) on_face = true;
                }
                return on_face ? Membership::boundary : Membership::interior;
            },
            [&](const BallShape& b) {
                double s = 0.0;
                for (std::size_t i = 0; i < dim_; ++i) s += (x[i] - b.center[i]) * (x[i] - b.center[i]);
                const double gap = std::sqrt(s) - b.radius;
                if (std::isnan(gap)) return Membership::exterior;
                if (std::abs(gap) <= kRelTol * std::max(1.0, b.radius)) return Membership::boundary;
                return gap < 0 ? Membership::interior : Membership::exterior;
            },
            [&](const HalfspaceShape& h) {
                double s = 0.0, scale = std::abs(h.offset);
                for (std::size_t i = 0; i < dim_; ++i) {
                    s += h.normal[i] * x[i];
                    scale += std::abs(h.normal[i] * x[i]);
                }
                const double gap = s - h.offset;
                if (std::isnan(gap)) return Membership::exterior;
                if (std::abs(gap) <= kRelTol * std::max(1.0, scale)) return Membership::boundary;
                return gap < 0 ? Membership::interior : Membership::exterior;
            },
            [&](const SublevelShape& s) {
                const double v = s.p(x);
                if (std::isnan(v)) return Membership::exterior;
                if (std::abs(v) <= kRelTol * (1.0 + sublevel_scale(s.p, x))) return Membership::boundary;
                return v < 0 ? Membership::interior : Membership::exterior;
            },
            [&](const FullSpace&) {
                for (double v : x) {
                    if (!std::isfinite(v)) return Membership::exterior;
                }
                return Membership::interior;
            }},
        shape_);
}

bool Domain::bounded() const noexcept {
    if (const auto* b = std::get_if<BoxShape>(&shape_)) {
        return std::all_of(b->lo.begin(), b->lo.end(), [](double v) { return std::isfinite(v); }) &&
               std::all_of(b->hi.begin(), b->hi.end(), [](double v) { return std::isfinite(v); });
    }
    return std::holds_alternative<BallShape>(shape_);
}

bool Domain::has_flat_faces() const noexcept {
    return std::holds_alternative<BoxShape>(shape_) || std::holds_alternative<BallShape>(shape_) ||
           std::holds_alternative<HalfspaceShape>(shape_);
}

std::optional<std::vector<double>> Domain::project_to_boundary(std::span<const double> x) const {
    if (x.size() != dim_) throw DimensionError("project_to_boundary: point dimension mismatch");
    std::vector<double> y(x.begin(), x.end());
    if (const auto* b = std::get_if<BoxShape>(&shape_)) {
        bool outside = false;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (y[i] <= b->lo[i]) {
                y[i] = b->lo[i];
                outside = true;
            } else if (y[i] >= b->hi[i]) {
                y[i] = b->hi[i];
                outside = true;
            }
        }
        if (!outside) {
            // Interior point: move to the nearest face.
            std::size_t best = 0;
            double dist = INFINITY;
            bool upper = false;
            for (std::size_t i = 0; i < dim_; ++i) {
                if (y[i] - b->lo[i] < dist) {
                    dist = y[i] - b->lo[i];
                    best = i;
                    upper = false;
                }
                if (b->hi[i] - y[i] < dist) {
                    dist = b->hi[i] - y[i];
                    best = i;
                    upper = true;
                }
            }
            y[best] = upper ? b->hi[best] : b->lo[best];
        }
        return y;
    }
    if (const auto* b = std::get_if<BallShape>(&shape_)) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += (y[i] - b->center[i]) * (y[i] - b->center[i]);
        const double r = std::sqrt(s);
        if (r == 0.0) {
            y = b->center;
            y[0] += b->radius;
            return y;
        }
        for (std::size_t i = 0; i < dim_; ++i) y[i] = b->center[i] + (y[i] - b->center[i]) * (b->radius / r);
        return y;
    }
    if (const auto* h = std::get_if<HalfspaceShape>(&shape_)) {
        double s = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            s += h->normal[i] * y[i];
            nn += h->normal[i] * h->normal[i];
        }
        const double t = (s - h->offset) / nn;
        for (std::size_t i = 0; i < dim_; ++i) y[i] -= t * h->normal[i];
        return y;
    }
    return std::nullopt;
}

std::optional<std::pair<std::vector<double>, std::vector<double>>> Domain::bounding_box() const {
    if (!bounded()) return std::nullopt;
    if (const auto* b = std::get_if<BoxShape>(&shape_)) return std::pair{b->lo, b->hi};
    const auto& ball = std::get<BallShape>(shape_);
    std::vector<double> lo(dim_), hi(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        lo[i] = ball.center[i] - ball.radius;
        hi[i] = ball.center[i] + ball.radius;
    }
    return std::pair{lo, hi};
}

std::vector<std::vector<double>> boundary_sample(const Domain& d, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("boundary_sample: n must be >= 1");
    if (std::holds_alternative<SublevelShape>(d.shape())) {
        throw UnsupportedError("boundary_sample: sublevel-set domains are not supported");
    }
    if (!d.bounded()) throw UsageError("boundary_sample: domain is unbounded");
    const std::size_t m = d.dim();
    std::vector<std::vector<double>> out;
    out.reserve(n);

    if (const auto* ball = std::get_if<BallShape>(&d.shape())) {
        for (std::size_t k = 0; k < n; ++k) {
            PathStream rng(seed, k);
            std::vector<double> g(m);
            double r = 0.0;
            do {
                r = 0.0;
                for (auto& v : g) {
                    v = rng.normal();
                    r += v * v;
                }
            } while (r == 0.0);
            r = std::sqrt(r);
            std::vector<double> x(m);
            for (std::size_t i = 0; i < m; ++i) x[i] = ball->center[i] + ball->radius * g[i] / r;
            out.push_back(std::move(x));
        }
        return out;
    }

    const auto& box = std::get<BoxShape>(d.shape());
    std::vector<double> area(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i) area[i] *= box.hi[j] - box.lo[j];
        }
    }
    const double total = 2.0 * std::accumulate(area.begin(), area.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        PathStream rng(seed, k);
        double u = rng.uniform() * total;
        std::size_t face = 0;
        while (face + 1 < 2 * m && u >= area[face / 2]) {
            u -= area[face / 2];
            ++face;
        }
        const std::size_t axis = face / 2;
        std::vector<double> x(m);
        for (std::size_t i = 0; i < m; ++i) {
            x[i] = i == axis ? (face % 2 ? box.hi[i] : box.lo[i]) : box.lo[i] + rng.uniform() * (box.hi[i] - box.lo[i]);
        }
        out.push_back(std::move(x));
    }
    return out;
}

Exhaustion::Exhaustion(Kind kind, std::vector<double> center, double step)
    : kind_(kind), center_(std::move(center)), step_(step) {
    if (center_.empty()) throw DimensionError("Exhaustion: empty center");
    if (!(step_ > 0.0)) throw UsageError("Exhaustion: step must be positive");
}

Domain Exhaustion::operator()(int n) const {
    if (n < 1) throw UsageError("Exhaustion: index must be >= 1");
    const double r = step_ * n;
    if (kind_ == Kind::balls) return Domain::ball(center_, r);
    std::vector<double> lo(center_), hi(center_);
    for (std::size_t i = 0; i < lo.size(); ++i) {
        lo[i] -= r;
        hi[i] += r;
    }
    return Domain::box(std::move(lo), std::move(hi));
}

std::optional<int> Exhaustion::first_covering(const Domain& d, int n_max) const {
    auto bb = d.bounding_box();
    if (!bb) return std::nullopt;
    const auto& [lo, hi] = *bb;
    const std::size_t m = lo.size();
    // The closure of d lies in the box [lo, hi]; every corner strictly inside
    // the (convex) member is enough.
    for (int n = 1; n <= n_max; ++n) {
        const Domain x = (*this)(n);
        bool all = true;
        std::vector<double> corner(m);
        for (std::size_t mask = 0; mask < (std::size_t{1} << m) && all; ++mask) {
            for (std::size_t i = 0; i < m; ++i) corner[i] = (mask >> i) & 1u ? hi[i] : lo[i];
            all = x.contains(corner);
        }
        if (all) return n;
    }
    return std::nullopt;
}

} // namespace stochar
