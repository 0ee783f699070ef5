#include "stochar/io.hpp"

#include "stochar/error.hpp"

#include <cstdio>

namespace stochar::io {

json poly_to_json(const MultiPoly& p) {
    json terms = json::array();
    for (const auto& [e, c] : p.terms()) terms.push_back(json::array({e, c}));
    return terms;
}

MultiPoly poly_from_json(const json& j, std::size_t dim, const std::string& where) {
    if (j.is_number()) return MultiPoly::constant(dim, j.get<double>());
    if (!j.is_array()) throw ParseError(where, "polynomial must be a number or a list of [exponents, coeff] terms");
    MultiPoly p(dim);
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto& t = j[k];
        const std::string at = where + "[" + std::to_string(k) + "]";
        if (!t.is_array() || t.size() != 2 || !t[0].is_array() || !t[1].is_number()) {
            throw ParseError(at, "term must be [exponents, coeff]");
        }
        if (t[0].size() != dim) {
            throw DimensionError(at + ": exponent tuple has length " + std::to_string(t[0].size()) +
                                 ", expected " + std::to_string(dim));
        }
        Exponents e;
        for (const auto& v : t[0]) {
            if (!v.is_number_integer() || v.get<long long>() < 0) {
                throw ParseError(at, "exponents must be nonnegative integers");
            }
            e.push_back(v.get<std::uint32_t>());
        }
        p.add_term(e, t[1].get<double>());
    }
    return p;
}

json field_to_json(const PolyVectorField& f) {
    json comps = json::array();
    for (const auto& c : f.components()) comps.push_back(poly_to_json(c));
    return comps;
}

PolyVectorField field_from_json(const json& j, std::size_t dim, const std::string& where) {
    if (!j.is_array()) throw ParseError(where, "vector field must be a list of components");
    if (j.size() != dim) {
        throw DimensionError(where + ": vector field has " + std::to_string(j.size()) + " components, expected " +
                             std::to_string(dim));
    }
    std::vector<MultiPoly> comps;
    for (std::size_t i = 0; i < dim; ++i) {
        comps.push_back(poly_from_json(j[i], dim, where + "[" + std::to_string(i) + "]"));
    }
    return PolyVectorField(std::move(comps));
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join17(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += fmt17(v[i]);
    }
    return s;
}

} // namespace stochar::io
