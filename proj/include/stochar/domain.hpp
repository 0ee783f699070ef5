#pragma once

#include "stochar/polynomial.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace stochar {

enum class Membership { interior, boundary, exterior };

const char* to_string(Membership m) noexcept;

struct BoxShape {
    std::vector<double> lo, hi;
};
struct BallShape {
    std::vector<double> center;
    double radius;
};
// {x : normal . x < offset}
struct HalfspaceShape {
    std::vector<double> normal;
    double offset;
};
// {x : p(x) < 0}
struct SublevelShape {
    MultiPoly p;
};
struct FullSpace {};

/// An open set from a closed menu of shapes with decidable membership.
///
/// Boxes are classified with exact comparisons. Balls and halfspaces use a
/// relative tolerance of 1e-12 on the defining distance so that points built
/// by floating-point projection (e.g. unit vectors) land on the boundary.
/// Sublevel sets classify |p(x)| <= 1e-12 * (1 + sum_k |c_k x^k|) as boundary.
class Domain {
public:
    using Shape = std::variant<BoxShape, BallShape, HalfspaceShape, SublevelShape, FullSpace>;

    static Domain box(std::vector<double> lo, std::vector<double> hi);
    static Domain ball(std::vector<double> center, double radius);
    static Domain halfspace(std::vector<double> normal, double offset);
    static Domain sublevel(MultiPoly p);
    static Domain full(std::size_t dim);

    std::size_t dim() const noexcept { return dim_; }
    const Shape& shape() const noexcept { return shape_; }
    const std::string& label() const noexcept { return label_; }
    Domain& with_label(std::string label) {
        label_ = std::move(label);
        return *this;
    }
    std::string kind_name() const;

    Membership membership(std::span<const double> x) const;
    bool contains(std::span<const double> x) const { return membership(x) == Membership::interior; }
    bool contains_closure(std::span<const double> x) const { return membership(x) != Membership::exterior; }

    bool bounded() const noexcept;
    // Box/ball/halfspace: the shapes with an explicit exterior normal.
    bool has_flat_faces() const noexcept;

    /// Nearest point of the boundary (box: clamp; ball: radial; halfspace:
    /// orthogonal). Returns nullopt for sublevel and full space.
    std::optional<std::vector<double>> project_to_boundary(std::span<const double> x) const;

    /// Axis-aligned bounding box [lo, hi]; nullopt if unbounded or sublevel.
    std::optional<std::pair<std::vector<double>, std::vector<double>>> bounding_box() const;

private:
    Domain(std::size_t dim, Shape shape) : dim_(dim), shape_(std::move(shape)) {}

    std::size_t dim_;
    Shape shape_;
    std::string label_;
};

/// n points on the boundary of a bounded box or ball. Balls are sampled
/// uniformly w.r.t. surface measure, boxes uniformly over faces weighted by
/// face area.
std::vector<std::vector<double>> boundary_sample(const Domain& d, std::size_t n, std::uint64_t seed);

/// Increasing family n -> X_n (n >= 1) with closure(X_n) inside X_{n+1}.
class Exhaustion {
public:
    enum class Kind { balls, boxes };

    Exhaustion(Kind kind, std::vector<double> center, double step);
    static Exhaustion balls(std::size_t dim, double step = 1.0) {
        return Exhaustion(Kind::balls, std::vector<double>(dim, 0.0), step);
    }

    Kind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return center_.size(); }
    const std::vector<double>& center() const noexcept { return center_; }
    double step() const noexcept { return step_; }

    Domain operator()(int n) const;

    /// Smallest n <= n_max whose member contains the closure of `d`, if any.
    std::optional<int> first_covering(const Domain& d, int n_max) const;

private:
    Kind kind_;
    std::vector<double> center_;
    double step_;
};

} // namespace stochar
