#include "stochar/hormander.hpp"

#include "stochar/error.hpp"
#include "stochar/io.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <sstream>

namespace stochar {

int numerical_rank(const std::vector<std::vector<double>>& vectors, std::size_t dim, double rank_tol) {
    if (vectors.empty()) return 0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t j = 0; j < vectors.size(); ++j) {
        for (std::size_t i = 0; i < dim; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[j][i];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= 0.0) return 0;
    int rank = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (s(k) > rank_tol * s(0)) ++rank;
    }
    return rank;
}

BracketReport check_hormander(const HormanderForm& system, const std::vector<std::vector<double>>& points,
                              int max_depth, double rank_tol, SpanMode mode) {
    if (max_depth < 0) throw UsageError("check_hormander: max_depth must be >= 0");
    if (points.empty()) throw UsageError("check_hormander: no evaluation points");
    if (!(rank_tol > 0.0)) throw UsageError("check_hormander: rank_tol must be positive");
    if (system.noise.empty() && max_depth == 0 && mode == SpanMode::parabolic) {
        throw UsageError("check_hormander: empty generating set (no noise fields and max_depth = 0)");
    }
    const std::size_t dim = system.drift.dim();
    for (const auto& x : system.noise) {
        if (x.dim() != dim) throw DimensionError("check_hormander: field dimension mismatch");
    }
    for (const auto& p : points) {
        if (p.size() != dim) throw DimensionError("check_hormander: point dimension mismatch");
    }

    // Index 0 is X0, 1..r are the noise fields.
    std::vector<const PolyVectorField*> base;
    base.push_back(&system.drift);
    for (const auto& x : system.noise) base.push_back(&x);

    BracketReport report;
    report.mode = mode;
    report.max_depth = max_depth;
    report.rank_tol = rank_tol;

    auto seen = [&](const PolyVectorField& f) {
        return std::any_of(report.fields.begin(), report.fields.end(),
                           [&](const GeneratedField& g) { return g.field == f; });
    };

    std::vector<std::size_t> frontier;
    for (std::size_t i = (mode == SpanMode::parabolic ? 1 : 0); i < base.size(); ++i) {
        if (base[i]->is_zero() || seen(*base[i])) continue;
        frontier.push_back(report.fields.size());
        report.fields.push_back({*base[i], 0, "X" + std::to_string(i)});
    }
    for (int depth = 1; depth <= max_depth && !frontier.empty(); ++depth) {
        std::vector<std::size_t> next;
        for (std::size_t f : frontier) {
            for (std::size_t i = 0; i < base.size(); ++i) {
                PolyVectorField br = lie_bracket(*base[i], report.fields[f].field);
                if (br.is_zero() || seen(br)) continue;
                std::string name = "[X" + std::to_string(i) + "," + report.fields[f].derivation + "]";
                next.push_back(report.fields.size());
                report.fields.push_back({std::move(br), depth, std::move(name)});
            }
        }
        frontier = std::move(next);
    }

    report.spans_everywhere = true;
    std::vector<double> value(dim);
    for (const auto& p : points) {
        PointRank pr;
        pr.point = p;
        pr.required = static_cast<int>(dim);
        std::vector<std::vector<double>> cols;
        std::size_t k = 0;
        for (int depth = 0; depth <= max_depth; ++depth) {
            for (; k < report.fields.size() && report.fields[k].depth == depth; ++k) {
                report.fields[k].field.evaluate(p, value);
                cols.push_back(value);
            }
            pr.rank = numerical_rank(cols, dim, rank_tol);
            if (pr.rank == pr.required) {
                pr.depth_reached = depth;
                break;
            }
        }
        if (pr.rank < pr.required) report.spans_everywhere = false;
        report.points.push_back(std::move(pr));
    }
    return report;
}

std::string BracketReport::to_json() const {
    io::json j;
    j["mode"] = mode == SpanMode::parabolic ? "parabolic" : "full";
    j["max_depth"] = max_depth;
    j["rank_tol"] = rank_tol;
    j["spans_everywhere"] = spans_everywhere;
    io::json fs = io::json::array();
    for (const auto& f : fields) {
        fs.push_back({{"depth", f.depth}, {"derivation", f.derivation}, {"field", io::field_to_json(f.field)}});
    }
    j["fields"] = fs;
    io::json ps = io::json::array();
    for (const auto& p : points) {
        ps.push_back({{"point", p.point}, {"rank", p.rank}, {"required", p.required}, {"depth_reached", p.depth_reached}});
    }
    j["points"] = ps;
    return j.dump(2);
}

std::string BracketReport::to_table() const {
    std::ostringstream os;
    os << "mode: " << (mode == SpanMode::parabolic ? "parabolic" : "full") << ", max depth " << max_depth
       << ", " << fields.size() << " generated field(s)\n";
    for (const auto& f : fields) os << "  depth " << f.depth << "  " << f.derivation << " = " << f.field.to_string() << '\n';
    os << "point                          rank  required  depth\n";
    for (const auto& p : points) {
        std::string pt = "(" + io::join17(p.point) + ")";
        os << pt;
        for (std::size_t pad = pt.size(); pad < 31; ++pad) os << ' ';
        os << p.rank << "     " << p.required << "         "
           << (p.depth_reached >= 0 ? std::to_string(p.depth_reached) : std::string("-")) << '\n';
    }
    os << (spans_everywhere ? "spans at all points\n" : "does NOT span at all points\n");
    return os.str();
}

} // namespace stochar
