#pragma once

#include "stochar/polynomial.hpp"

#include <string>
#include <vector>

namespace stochar {

enum class SpanMode {
    parabolic, // V0 = {X1..Xr}; X0 only enters through brackets
    full,      // V0 = {X0, X1..Xr}
};

struct GeneratedField {
    PolyVectorField field;
    int depth;
    std::string derivation; // e.g. "[X1,[X0,X1]]"
};

struct PointRank {
    std::vector<double> point;
    int rank = 0;
    int required = 0;
    // Smallest depth at which the fields reached full rank, or -1.
    int depth_reached = -1;
};

struct BracketReport {
    SpanMode mode = SpanMode::parabolic;
    int max_depth = 0;
    double rank_tol = 1e-8;
    std::vector<GeneratedField> fields;
    std::vector<PointRank> points;
    bool spans_everywhere = false;

    std::string to_json() const;
    std::string to_table() const;
};

/// Breadth-first bracket generation up to `max_depth`, deduplicated by exact
/// polynomial equality, followed by a numerical rank check at each point.
/// Rank counts singular values above rank_tol * (largest singular value).
BracketReport check_hormander(const HormanderForm& system, const std::vector<std::vector<double>>& points,
                              int max_depth, double rank_tol = 1e-8, SpanMode mode = SpanMode::parabolic);

/// Numerical rank of the columns `vectors` (each of length dim).
int numerical_rank(const std::vector<std::vector<double>>& vectors, std::size_t dim, double rank_tol);

} // namespace stochar
