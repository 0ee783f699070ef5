#include "stochar/polynomial.hpp"

#include "stochar/error.hpp"

#include <sstream>

namespace stochar {

namespace {

double ipow(double x, std::uint32_t e) {
    double r = 1.0;
    while (e) {
        if (e & 1u) r *= x;
        x *= x;
        e >>= 1u;
    }
    return r;
}

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

} // namespace

MultiPoly::MultiPoly(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw DimensionError("MultiPoly: dimension must be positive");
}

MultiPoly MultiPoly::constant(std::size_t dim, double value) {
    MultiPoly p(dim);
    p.add_term(Exponents(dim, 0), value);
    return p;
}

MultiPoly MultiPoly::variable(std::size_t dim, std::size_t axis) {
    if (axis >= dim) throw DimensionError("MultiPoly::variable: axis out of range");
    Exponents e(dim, 0);
    e[axis] = 1;
    MultiPoly p(dim);
    p.add_term(e, 1.0);
    return p;
}

MultiPoly MultiPoly::monomial(Exponents exponents, double coeff) {
    MultiPoly p(exponents.size());
    p.add_term(exponents, coeff);
    return p;
}

bool MultiPoly::is_constant() const noexcept {
    for (const auto& [e, c] : terms_) {
        for (auto k : e) {
            if (k != 0) return false;
        }
    }
    return true;
}

std::uint32_t MultiPoly::degree() const noexcept {
    std::uint32_t d = 0;
    for (const auto& [e, c] : terms_) {
        std::uint32_t s = 0;
        for (auto k : e) s += k;
        d = std::max(d, s);
    }
    return d;
}

double MultiPoly::coefficient(const Exponents& exponents) const {
    auto it = terms_.find(exponents);
    return it == terms_.end() ? 0.0 : it->second;
}

void MultiPoly::add_term(const Exponents& exponents, double coeff) {
    require_same_dim(exponents.size(), dim_, "MultiPoly::add_term");
    if (coeff == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(exponents, coeff);
    if (!inserted) {
        it->second += coeff;
        if (it->second == 0.0) terms_.erase(it);
    }
}

double MultiPoly::operator()(std::span<const double> x) const {
    require_same_dim(x.size(), dim_, "MultiPoly::evaluate");
    double sum = 0.0;
    for (const auto& [e, c] : terms_) {
        double t = c;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (e[i]) t *= ipow(x[i], e[i]);
        }
        sum += t;
    }
    return sum;
}

MultiPoly& MultiPoly::operator+=(const MultiPoly& other) {
    require_same_dim(dim_, other.dim_, "MultiPoly::+");
    for (const auto& [e, c] : other.terms_) add_term(e, c);
    return *this;
}

MultiPoly& MultiPoly::operator-=(const MultiPoly& other) {
    require_same_dim(dim_, other.dim_, "MultiPoly::-");
    for (const auto& [e, c] : other.terms_) add_term(e, -c);
    return *this;
}

MultiPoly& MultiPoly::operator*=(double s) {
    if (s == 0.0) {
        terms_.clear();
        return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
        it->second *= s;
        if (it->second == 0.0) {
            it = terms_.erase(it);
        } else {
            ++it;
        }
    }
    return *this;
}

MultiPoly operator*(const MultiPoly& a, const MultiPoly& b) {
    require_same_dim(a.dim_, b.dim_, "MultiPoly::*");
    MultiPoly r(a.dim_);
    Exponents e(a.dim_);
    for (const auto& [ea, ca] : a.terms_) {
        for (const auto& [eb, cb] : b.terms_) {
            for (std::size_t i = 0; i < a.dim_; ++i) e[i] = ea[i] + eb[i];
            r.add_term(e, ca * cb);
        }
    }
    return r;
}

std::string MultiPoly::to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [e, c] : terms_) {
        if (!first) os << " + ";
        first = false;
        os << c;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (e[i] == 0) continue;
            os << "*x" << (i + 1);
            if (e[i] > 1) os << '^' << e[i];
        }
    }
    return os.str();
}

MultiPoly differentiate(const MultiPoly& p, std::size_t axis) {
    if (axis >= p.dim()) {
        throw DimensionError("differentiate: axis " + std::to_string(axis) + " out of range for dim " +
                             std::to_string(p.dim()));
    }
    MultiPoly r(p.dim());
    for (const auto& [e, c] : p.terms()) {
        if (e[axis] == 0) continue;
        Exponents d = e;
        d[axis] -= 1;
        r.add_term(d, c * static_cast<double>(e[axis]));
    }
    return r;
}

PolyVectorField::PolyVectorField(std::size_t dim) : components_(dim, MultiPoly(dim)) {
    if (dim == 0) throw DimensionError("PolyVectorField: dimension must be positive");
}

PolyVectorField::PolyVectorField(std::vector<MultiPoly> components) : components_(std::move(components)) {
    if (components_.empty()) throw DimensionError("PolyVectorField: no components");
    for (const auto& c : components_) {
        require_same_dim(c.dim(), components_.size(), "PolyVectorField");
    }
}

PolyVectorField PolyVectorField::coordinate(std::size_t dim, std::size_t axis) {
    if (axis >= dim) throw DimensionError("PolyVectorField::coordinate: axis out of range");
    PolyVectorField f(dim);
    f[axis] = MultiPoly::constant(dim, 1.0);
    return f;
}

bool PolyVectorField::is_zero() const noexcept {
    for (const auto& c : components_) {
        if (!c.is_zero()) return false;
    }
    return true;
}

void PolyVectorField::evaluate(std::span<const double> x, std::span<double> out) const {
    require_same_dim(out.size(), dim(), "PolyVectorField::evaluate");
    for (std::size_t i = 0; i < dim(); ++i) out[i] = components_[i](x);
}

MultiPoly PolyVectorField::apply(const MultiPoly& w) const {
    require_same_dim(w.dim(), dim(), "PolyVectorField::apply");
    MultiPoly r(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
        if (components_[i].is_zero()) continue;
        r += components_[i] * differentiate(w, i);
    }
    return r;
}

PolyVectorField& PolyVectorField::operator+=(const PolyVectorField& other) {
    require_same_dim(dim(), other.dim(), "PolyVectorField::+");
    for (std::size_t i = 0; i < dim(); ++i) components_[i] += other.components_[i];
    return *this;
}

PolyVectorField& PolyVectorField::operator-=(const PolyVectorField& other) {
    require_same_dim(dim(), other.dim(), "PolyVectorField::-");
    for (std::size_t i = 0; i < dim(); ++i) components_[i] -= other.components_[i];
    return *this;
}

PolyVectorField& PolyVectorField::operator*=(double s) {
    for (auto& c : components_) c *= s;
    return *this;
}

std::string PolyVectorField::to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dim(); ++i) {
        if (i) s += ", ";
        s += components_[i].to_string();
    }
    return s + ")";
}

PolyMatrix::PolyMatrix(std::size_t rows, std::size_t cols, std::size_t dim)
    : rows_(rows), cols_(cols), dim_(dim), entries_(rows * cols, MultiPoly(dim)) {}

PolyVectorField PolyMatrix::column(std::size_t j) const {
    if (rows_ != dim_) throw DimensionError("PolyMatrix::column: rows must equal state dimension");
    std::vector<MultiPoly> comps;
    comps.reserve(rows_);
    for (std::size_t i = 0; i < rows_; ++i) comps.push_back((*this)(i, j));
    return PolyVectorField(std::move(comps));
}

PolyMatrix PolyMatrix::times_transpose() const {
    PolyMatrix a(rows_, rows_, dim_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = i; j < rows_; ++j) {
            MultiPoly s(dim_);
            for (std::size_t k = 0; k < cols_; ++k) s += (*this)(i, k) * (*this)(j, k);
            a(i, j) = s;
            a(j, i) = s;
        }
    }
    return a;
}

PolyVectorField lie_bracket(const PolyVectorField& x, const PolyVectorField& y) {
    require_same_dim(x.dim(), y.dim(), "lie_bracket");
    PolyVectorField r(x.dim());
    for (std::size_t j = 0; j < x.dim(); ++j) {
        r[j] = x.apply(y[j]) - y.apply(x[j]);
    }
    return r;
}

HormanderForm to_hormander_form(const PolyVectorField& b, const PolyMatrix& sigma) {
    const std::size_t m = b.dim();
    if (sigma.rows() != m || sigma.dim() != m) {
        throw DimensionError("to_hormander_form: sigma must have " + std::to_string(m) + " rows");
    }

    HormanderForm form{b, {}};
    form.noise.reserve(sigma.cols());
    for (std::size_t i = 0; i < sigma.cols(); ++i) form.noise.push_back(sigma.column(i));

    // X0 = Y0 - 1/2 sum_i X_i(sigma_{l i}) d_l ; with X_i(s) = sum_j sigma_ji d_j s.
    for (std::size_t l = 0; l < m; ++l) {
        MultiPoly corr(m);
        for (std::size_t i = 0; i < sigma.cols(); ++i) {
            corr += form.noise[i].apply(sigma(l, i));
        }
        form.drift[l] -= 0.5 * corr;
    }
    return form;
}

MultiPoly apply_hormander(const HormanderForm& form, const MultiPoly& w) {
    MultiPoly r = form.drift.apply(w);
    for (const auto& x : form.noise) r += 0.5 * x.apply(x.apply(w));
    return r;
}

MultiPoly apply_generator(const PolyVectorField& b, const PolyMatrix& a, const MultiPoly& w) {
    const std::size_t m = b.dim();
    if (a.rows() != m || a.cols() != m || w.dim() != m || a.dim() != m) {
        throw DimensionError("apply_generator: inconsistent dimensions");
    }
    MultiPoly r = b.apply(w);
    for (std::size_t i = 0; i < m; ++i) {
        MultiPoly di = differentiate(w, i);
        if (di.is_zero()) continue;
        for (std::size_t j = 0; j < m; ++j) {
            if (a(i, j).is_zero()) continue;
            r += 0.5 * (a(i, j) * differentiate(di, j));
        }
    }
    return r;
}

} // namespace stochar
