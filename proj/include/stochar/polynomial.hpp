#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace stochar {

using Exponents = std::vector<std::uint32_t>;

/// Sparse multivariate polynomial with double coefficients.
///
/// Terms are kept in a map keyed by exponent tuple, so iteration order (and
/// therefore every derived result) is deterministic. Zero coefficients are
/// never stored.
class MultiPoly {
public:
    using TermMap = std::map<Exponents, double>;

    explicit MultiPoly(std::size_t dim);

    static MultiPoly constant(std::size_t dim, double value);
    static MultiPoly variable(std::size_t dim, std::size_t axis);
    static MultiPoly monomial(Exponents exponents, double coeff);

    std::size_t dim() const noexcept { return dim_; }
    const TermMap& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }
    bool is_constant() const noexcept;
    std::uint32_t degree() const noexcept;
    double coefficient(const Exponents& exponents) const;

    // Adds coeff to the term with the given exponents, dropping it if the
    // result is exactly zero.
    void add_term(const Exponents& exponents, double coeff);

    double operator()(std::span<const double> x) const;

    MultiPoly& operator+=(const MultiPoly& other);
    MultiPoly& operator-=(const MultiPoly& other);
    MultiPoly& operator*=(double s);

    friend MultiPoly operator+(MultiPoly a, const MultiPoly& b) { return a += b; }
    friend MultiPoly operator-(MultiPoly a, const MultiPoly& b) { return a -= b; }
    friend MultiPoly operator*(MultiPoly a, double s) { return a *= s; }
    friend MultiPoly operator*(double s, MultiPoly a) { return a *= s; }
    friend MultiPoly operator*(const MultiPoly& a, const MultiPoly& b);
    MultiPoly operator-() const { return *this * -1.0; }

    friend bool operator==(const MultiPoly& a, const MultiPoly& b) {
        return a.dim_ == b.dim_ && a.terms_ == b.terms_;
    }

    // e.g. "-1*x2^2 + 3*x1*x2"; variables are 1-based in the printout.
    std::string to_string() const;

private:
    std::size_t dim_;
    TermMap terms_;
};

/// Exact partial derivative along `axis` (0-based).
MultiPoly differentiate(const MultiPoly& p, std::size_t axis);

/// A polynomial vector field X = sum_i X^i d/dx_i.
class PolyVectorField {
public:
    explicit PolyVectorField(std::size_t dim);
    explicit PolyVectorField(std::vector<MultiPoly> components);

    // Constant coordinate field d/dx_axis.
    static PolyVectorField coordinate(std::size_t dim, std::size_t axis);

    std::size_t dim() const noexcept { return components_.size(); }
    const MultiPoly& operator[](std::size_t i) const { return components_[i]; }
    MultiPoly& operator[](std::size_t i) { return components_[i]; }
    const std::vector<MultiPoly>& components() const noexcept { return components_; }

    bool is_zero() const noexcept;
    void evaluate(std::span<const double> x, std::span<double> out) const;

    /// Directional derivative X w = sum_i X^i d_i w.
    MultiPoly apply(const MultiPoly& w) const;

    PolyVectorField& operator+=(const PolyVectorField& other);
    PolyVectorField& operator-=(const PolyVectorField& other);
    PolyVectorField& operator*=(double s);
    friend PolyVectorField operator+(PolyVectorField a, const PolyVectorField& b) { return a += b; }
    friend PolyVectorField operator-(PolyVectorField a, const PolyVectorField& b) { return a -= b; }
    friend PolyVectorField operator*(double s, PolyVectorField a) { return a *= s; }

    friend bool operator==(const PolyVectorField& a, const PolyVectorField& b) {
        return a.components_ == b.components_;
    }

    std::string to_string() const;

private:
    std::vector<MultiPoly> components_;
};

/// Dense rows x cols matrix of polynomials (sigma, or a = sigma sigma^T).
class PolyMatrix {
public:
    PolyMatrix(std::size_t rows, std::size_t cols, std::size_t dim);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t dim() const noexcept { return dim_; }

    const MultiPoly& operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }
    MultiPoly& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }

    PolyVectorField column(std::size_t j) const;
    PolyMatrix times_transpose() const; // this * this^T

    friend bool operator==(const PolyMatrix& a, const PolyMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.entries_ == b.entries_;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::size_t dim_;
    std::vector<MultiPoly> entries_;
};

/// [X,Y]^j = sum_i (X^i d_i Y^j - Y^i d_i X^j).
PolyVectorField lie_bracket(const PolyVectorField& x, const PolyVectorField& y);

/// L = X0 + 1/2 sum_j Xj^2, with Xj the columns of sigma and X0 the drift
/// minus the correction sum_l [sum_{i,j} sigma_ji d_j sigma_li] d_l.
struct HormanderForm {
    PolyVectorField drift;               // X0
    std::vector<PolyVectorField> noise;  // X1..Xr
};

HormanderForm to_hormander_form(const PolyVectorField& b, const PolyMatrix& sigma);

/// (X0 + 1/2 sum_j Xj Xj) w.
MultiPoly apply_hormander(const HormanderForm& form, const MultiPoly& w);

/// L w = sum_i b_i d_i w + 1/2 sum_ij a_ij d_i d_j w.
MultiPoly apply_generator(const PolyVectorField& b, const PolyMatrix& a, const MultiPoly& w);

} // namespace stochar
