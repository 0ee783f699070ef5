#pragma once

#include "stochar/config.hpp"
#include "stochar/domain.hpp"
#include "stochar/polynomial.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stochar {

// out[i] = b_i(x)
using DriftFn = std::function<void(std::span<const double> x, std::span<double> out)>;
// out[i * r + j] = sigma_ij(x)
using SigmaFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Flat, allocation-free evaluator for a MultiPoly.
class CompiledPoly {
public:
    CompiledPoly() = default;
    explicit CompiledPoly(const MultiPoly& p);

    bool is_zero() const noexcept { return coeffs_.empty(); }
    bool is_constant() const noexcept { return constant_; }
    double operator()(const double* x) const noexcept;

private:
    std::size_t dim_ = 0;
    bool constant_ = true;
    std::vector<double> coeffs_;
    std::vector<std::uint32_t> exps_; // n_terms * dim
};

/// dx = b(x) dt + sigma(x) dW on R^m driven by r-dimensional noise.
///
/// Coefficients are either polynomials (all symbolic operations available)
/// or registered built-in callables (simulation only; symbolic accessors
/// throw UnsupportedError).
class DiffusionModel {
public:
    DiffusionModel(PolyVectorField drift, PolyMatrix sigma, std::optional<Domain> statespace = std::nullopt);
    DiffusionModel(std::size_t m, std::size_t r, DriftFn drift, SigmaFn sigma,
                   std::optional<Domain> statespace = std::nullopt);
    // Mixed forms: polynomial drift with a built-in sigma and vice versa.
    DiffusionModel(PolyVectorField drift, std::size_t r, SigmaFn sigma, std::optional<Domain> statespace = std::nullopt);
    DiffusionModel(DriftFn drift, PolyMatrix sigma, std::optional<Domain> statespace = std::nullopt);

    std::size_t dim_state() const noexcept { return m_; }
    std::size_t dim_noise() const noexcept { return r_; }
    const Domain& statespace() const noexcept { return statespace_; }

    bool is_polynomial() const noexcept { return poly_drift_.has_value() && poly_sigma_.has_value(); }
    const PolyVectorField& drift_poly() const;
    const PolyMatrix& sigma_poly() const;
    PolyMatrix diffusion_poly() const; // a = sigma sigma^T

    // Hot-path evaluation into caller buffers (sizes m and m*r / m*m).
    void drift(const double* x, double* out) const;
    void sigma(const double* x, double* out) const;
    void diffusion(const double* x, double* out) const;

    bool drift_is_zero() const noexcept { return drift_zero_; }
    bool sigma_is_constant() const noexcept { return sigma_constant_; }

private:
    void compile();
    void validate_dims() const;

    std::size_t m_, r_;
    std::optional<PolyVectorField> poly_drift_;
    std::optional<PolyMatrix> poly_sigma_;
    DriftFn fn_drift_;
    SigmaFn fn_sigma_;
    Domain statespace_;

    std::vector<CompiledPoly> c_drift_;
    std::vector<CompiledPoly> c_sigma_;
    bool drift_zero_ = false;
    bool sigma_constant_ = false;
    std::vector<double> sigma_const_values_;
};

void register_builtin_drift(const std::string& name, DriftFn fn);
void register_builtin_sigma(const std::string& name, SigmaFn fn);
// Throws ParseError for unknown names.
DriftFn builtin_drift(const std::string& name);
SigmaFn builtin_sigma(const std::string& name);

inline constexpr const char* kModelSchema = "stochar.model/1";

struct LoadedModel {
    DiffusionModel model;
    Domain domain; // U
    SimConfig sim;
    Exhaustion exhaustion;
    bool irreducible = false; // asserted, never verified
    nlohmann::json source;
};

/// Parses and validates a model spec (see README for the schema).
LoadedModel load_model(const nlohmann::json& spec);
LoadedModel load_model_text(const std::string& text);
LoadedModel load_model_file(const std::string& path);

Domain domain_from_json(const nlohmann::json& j, std::size_t dim, const std::string& where);
nlohmann::json domain_to_json(const Domain& d);

} // namespace stochar
