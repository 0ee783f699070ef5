#pragma once

#include "stochar/polynomial.hpp"

#include <json.hpp>

#include <span>
#include <string>

namespace stochar::io {

using nlohmann::json;

// Polynomials serialize as a list of [exponents, coefficient] pairs:
//   [[[0,2], -1.0], [[1,0], 3.0]]
json poly_to_json(const MultiPoly& p);
MultiPoly poly_from_json(const json& j, std::size_t dim, const std::string& where);

// Vector fields serialize as a list of component polynomials.
json field_to_json(const PolyVectorField& f);
PolyVectorField field_from_json(const json& j, std::size_t dim, const std::string& where);

// Formats with 17 significant digits, the convention for all numeric output.
std::string fmt17(double v);

// Comma-joined fmt17 of every entry.
std::string join17(std::span<const double> v);

} // namespace stochar::io
