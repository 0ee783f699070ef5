#include "stochar/model.hpp"

#include "stochar/error.hpp"
#include "stochar/io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace stochar {

using nlohmann::json;

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw UsageError("sim: dt must be positive");
    if (!(horizon > 0.0)) throw UsageError("sim: horizon must be positive");
    if (!(dt < horizon)) throw UsageError("sim: dt must be smaller than the horizon");
    if (path_stride == 0) throw UsageError("sim: path_stride must be positive");
}

CompiledPoly::CompiledPoly(const MultiPoly& p) : dim_(p.dim()), constant_(p.is_constant()) {
    for (const auto& [e, c] : p.terms()) {
        coeffs_.push_back(c);
        exps_.insert(exps_.end(), e.begin(), e.end());
    }
}

double CompiledPoly::operator()(const double* x) const noexcept {
    if (coeffs_.empty()) return 0.0;
    if (constant_) return coeffs_[0];
    double sum = 0.0;
    const std::uint32_t* e = exps_.data();
    for (double c : coeffs_) {
        double t = c;
        for (std::size_t i = 0; i < dim_; ++i, ++e) {
            for (std::uint32_t k = 0; k < *e; ++k) t *= x[i];
        }
        sum += t;
    }
    return sum;
}

DiffusionModel::DiffusionModel(PolyVectorField drift, PolyMatrix sigma, std::optional<Domain> statespace)
    : m_(drift.dim()), r_(sigma.cols()), poly_drift_(std::move(drift)), poly_sigma_(std::move(sigma)),
      statespace_(statespace ? std::move(*statespace) : Domain::full(m_)) {
    validate_dims();
    compile();
}

DiffusionModel::DiffusionModel(std::size_t m, std::size_t r, DriftFn drift, SigmaFn sigma,
                               std::optional<Domain> statespace)
    : m_(m), r_(r), fn_drift_(std::move(drift)), fn_sigma_(std::move(sigma)),
      statespace_(statespace ? std::move(*statespace) : Domain::full(m == 0 ? 1 : m)) {
    validate_dims();
    compile();
}

DiffusionModel::DiffusionModel(PolyVectorField drift, std::size_t r, SigmaFn sigma, std::optional<Domain> statespace)
    : m_(drift.dim()), r_(r), poly_drift_(std::move(drift)), fn_sigma_(std::move(sigma)),
      statespace_(statespace ? std::move(*statespace) : Domain::full(m_)) {
    validate_dims();
    compile();
}

DiffusionModel::DiffusionModel(DriftFn drift, PolyMatrix sigma, std::optional<Domain> statespace)
    : m_(sigma.rows()), r_(sigma.cols()), poly_sigma_(std::move(sigma)), fn_drift_(std::move(drift)),
      statespace_(statespace ? std::move(*statespace) : Domain::full(m_ == 0 ? 1 : m_)) {
    validate_dims();
    compile();
}

void DiffusionModel::validate_dims() const {
    if (m_ == 0) throw DimensionError("model: dim_state must be positive");
    if (poly_sigma_ && (poly_sigma_->rows() != m_ || poly_sigma_->dim() != m_)) {
        throw DimensionError("model: sigma must have dim_state rows");
    }
    if (poly_drift_ && poly_drift_->dim() != m_) throw DimensionError("model: drift dimension mismatch");
    if (!poly_drift_ && !fn_drift_) throw UsageError("model: missing drift");
    if (!poly_sigma_ && !fn_sigma_) throw UsageError("model: missing sigma");
    if (statespace_.dim() != m_) throw DimensionError("model: statespace dimension mismatch");
}

void DiffusionModel::compile() {
    if (poly_drift_) {
        drift_zero_ = poly_drift_->is_zero();
        for (const auto& c : poly_drift_->components()) c_drift_.emplace_back(c);
    }
    if (poly_sigma_) {
        sigma_constant_ = true;
        for (std::size_t i = 0; i < m_; ++i) {
            for (std::size_t j = 0; j < r_; ++j) {
                const auto& p = (*poly_sigma_)(i, j);
                c_sigma_.emplace_back(p);
                if (!p.is_constant()) sigma_constant_ = false;
            }
        }
        if (sigma_constant_) {
            sigma_const_values_.resize(m_ * r_);
            std::vector<double> zero(m_, 0.0);
            for (std::size_t k = 0; k < m_ * r_; ++k) sigma_const_values_[k] = c_sigma_[k](zero.data());
        }
    }
}

const PolyVectorField& DiffusionModel::drift_poly() const {
    if (!poly_drift_) throw UnsupportedError("model drift is a built-in callable; symbolic operations need a polynomial drift");
    return *poly_drift_;
}

const PolyMatrix& DiffusionModel::sigma_poly() const {
    if (!poly_sigma_) throw UnsupportedError("model sigma is a built-in callable; symbolic operations need a polynomial sigma");
    return *poly_sigma_;
}

PolyMatrix DiffusionModel::diffusion_poly() const { return sigma_poly().times_transpose(); }

void DiffusionModel::drift(const double* x, double* out) const {
    if (poly_drift_) {
        for (std::size_t i = 0; i < m_; ++i) out[i] = c_drift_[i](x);
    } else {
        fn_drift_({x, m_}, {out, m_});
    }
}

void DiffusionModel::sigma(const double* x, double* out) const {
    if (sigma_constant_) {
        std::copy(sigma_const_values_.begin(), sigma_const_values_.end(), out);
    } else if (poly_sigma_) {
        for (std::size_t k = 0; k < m_ * r_; ++k) out[k] = c_sigma_[k](x);
    } else {
        fn_sigma_({x, m_}, {out, m_ * r_});
    }
}

void DiffusionModel::diffusion(const double* x, double* out) const {
    std::vector<double> s(m_ * r_);
    sigma(x, s.data());
    for (std::size_t i = 0; i < m_; ++i) {
        for (std::size_t j = 0; j < m_; ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < r_; ++k) v += s[i * r_ + k] * s[j * r_ + k];
            out[i * m_ + j] = v;
        }
    }
}

namespace {

struct Registry {
    std::mutex mu;
    std::map<std::string, DriftFn> drifts;
    std::map<std::string, SigmaFn> sigmas;

    Registry() {
        drifts["sine"] = [](std::span<const double> x, std::span<double> out) {
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::sin(x[i]);
        };
        drifts["tanh_restoring"] = [](std::span<const double> x, std::span<double> out) {
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = -std::tanh(x[i]);
        };
        // sigma_ii = sqrt(1 + |x|^2), zero off the diagonal (m x r).
        sigmas["sqrt_one_plus_norm2"] = [](std::span<const double> x, std::span<double> out) {
            double s = 1.0;
            for (double v : x) s += v * v;
            const std::size_t m = x.size(), r = out.size() / m;
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < std::min(m, r); ++i) out[i * r + i] = std::sqrt(s);
        };
    }
};

Registry& registry() {
    static Registry r;
    return r;
}

double number_or_inf(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
    }
    throw ParseError(where, "expected a number (or \"inf\"/\"-inf\")");
}

std::vector<double> vec_from_json(const json& j, std::size_t dim, const std::string& where) {
    if (!j.is_array()) throw ParseError(where, "expected a list of numbers");
    if (j.size() != dim) {
        throw DimensionError(where + ": expected " + std::to_string(dim) + " entries, got " + std::to_string(j.size()));
    }
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number_or_inf(j[i], where + "[" + std::to_string(i) + "]"));
    return v;
}

const json& require(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(where, std::string("missing field '") + key + "'");
    return *it;
}

} // namespace

void register_builtin_drift(const std::string& name, DriftFn fn) {
    std::lock_guard lock(registry().mu);
    registry().drifts[name] = std::move(fn);
}

void register_builtin_sigma(const std::string& name, SigmaFn fn) {
    std::lock_guard lock(registry().mu);
    registry().sigmas[name] = std::move(fn);
}

DriftFn builtin_drift(const std::string& name) {
    std::lock_guard lock(registry().mu);
    auto it = registry().drifts.find(name);
    if (it == registry().drifts.end()) throw ParseError("drift.builtin", "unknown built-in drift '" + name + "'");
    return it->second;
}

SigmaFn builtin_sigma(const std::string& name) {
    std::lock_guard lock(registry().mu);
    auto it = registry().sigmas.find(name);
    if (it == registry().sigmas.end()) throw ParseError("sigma.builtin", "unknown built-in sigma '" + name + "'");
    return it->second;
}

Domain domain_from_json(const json& j, std::size_t dim, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "domain must be an object");
    const auto kind = require(j, "kind", where).get<std::string>();
    std::optional<Domain> d;
    if (kind == "box") {
        d = Domain::box(vec_from_json(require(j, "lo", where), dim, where + ".lo"),
                        vec_from_json(require(j, "hi", where), dim, where + ".hi"));
    } else if (kind == "ball") {
        d = Domain::ball(vec_from_json(require(j, "center", where), dim, where + ".center"),
                         require(j, "radius", where).get<double>());
    } else if (kind == "halfspace") {
        d = Domain::halfspace(vec_from_json(require(j, "normal", where), dim, where + ".normal"),
                              require(j, "offset", where).get<double>());
    } else if (kind == "sublevel") {
        d = Domain::sublevel(io::poly_from_json(require(j, "poly", where), dim, where + ".poly"));
    } else if (kind == "full") {
        d = Domain::full(dim);
    } else {
        throw ParseError(where + ".kind", "unknown shape kind '" + kind + "'");
    }
    if (j.contains("label")) d->with_label(j["label"].get<std::string>());
    return *d;
}

json domain_to_json(const Domain& d) {
    json j;
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, BoxShape>) {
                j = {{"kind", "box"}, {"lo", s.lo}, {"hi", s.hi}};
            } else if constexpr (std::is_same_v<S, BallShape>) {
                j = {{"kind", "ball"}, {"center", s.center}, {"radius", s.radius}};
            } else if constexpr (std::is_same_v<S, HalfspaceShape>) {
                j = {{"kind", "halfspace"}, {"normal", s.normal}, {"offset", s.offset}};
            } else if constexpr (std::is_same_v<S, SublevelShape>) {
                j = {{"kind", "sublevel"}, {"poly", io::poly_to_json(s.p)}};
            } else {
                j = {{"kind", "full"}};
            }
        },
        d.shape());
    if (!d.label().empty()) j["label"] = d.label();
    return j;
}

LoadedModel load_model(const json& spec) {
    if (!spec.is_object()) throw ParseError("", "model spec must be a JSON object");
    const auto schema = require(spec, "schema", "").get<std::string>();
    if (schema != kModelSchema) {
        throw ParseError("schema", "unsupported schema '" + schema + "' (expected " + kModelSchema + ")");
    }
    const auto m_raw = require(spec, "dim_state", "").get<long long>();
    const auto r_raw = require(spec, "dim_noise", "").get<long long>();
    if (m_raw <= 0) throw DimensionError("dim_state must be positive");
    if (r_raw < 0) throw DimensionError("dim_noise must be nonnegative");
    const auto m = static_cast<std::size_t>(m_raw);
    const auto r = static_cast<std::size_t>(r_raw);

    std::optional<Domain> statespace;
    if (spec.contains("statespace")) statespace = domain_from_json(spec["statespace"], m, "statespace");

    const json& jd = require(spec, "drift", "");
    json js = require(spec, "sigma", "");
    const bool drift_builtin = jd.is_object();
    const bool sigma_builtin = js.is_object();

    std::optional<PolyVectorField> drift;
    if (!drift_builtin) drift = io::field_from_json(jd, m, "drift");
    std::optional<PolyMatrix> sigma;
    if (!sigma_builtin) {
        if (!js.is_array()) throw ParseError("sigma", "sigma must be a list of rows");
        if (r == 0 && js.empty()) js = json::array_t(m, json::array());
        if (js.size() != m) {
            throw DimensionError("sigma: has " + std::to_string(js.size()) + " rows, expected dim_state = " +
                                 std::to_string(m));
        }
        sigma.emplace(m, r, m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::string at = "sigma[" + std::to_string(i) + "]";
            if (!js[i].is_array()) throw ParseError(at, "row must be a list");
            if (js[i].size() != r) {
                throw DimensionError(at + ": has " + std::to_string(js[i].size()) + " columns, expected dim_noise = " +
                                     std::to_string(r));
            }
            for (std::size_t k = 0; k < r; ++k) {
                (*sigma)(i, k) = io::poly_from_json(js[i][k], m, at + "[" + std::to_string(k) + "]");
            }
        }
    }

    auto builtin_name = [](const json& j, const char* where) {
        if (!j.contains("builtin")) throw ParseError(where, "object form requires a 'builtin' name");
        return j["builtin"].get<std::string>();
    };

    std::optional<DiffusionModel> model;
    if (!drift_builtin && !sigma_builtin) {
        model.emplace(std::move(*drift), std::move(*sigma), statespace);
    } else if (drift_builtin && sigma_builtin) {
        model.emplace(m, r, builtin_drift(builtin_name(jd, "drift")), builtin_sigma(builtin_name(js, "sigma")), statespace);
    } else if (drift_builtin) {
        model.emplace(builtin_drift(builtin_name(jd, "drift")), std::move(*sigma), statespace);
    } else {
        model.emplace(std::move(*drift), r, builtin_sigma(builtin_name(js, "sigma")), statespace);
    }

    Domain domain = domain_from_json(require(spec, "domain", ""), m, "domain");

    SimConfig sim;
    if (spec.contains("sim")) {
        const json& s = spec["sim"];
        sim.dt = s.value("dt", sim.dt);
        sim.horizon = s.value("horizon", sim.horizon);
        sim.seed = s.value("seed", sim.seed);
        sim.bridge_correction = s.value("bridge_correction", sim.bridge_correction);
        sim.store_path = s.value("store_path", sim.store_path);
        sim.path_stride = s.value("path_stride", sim.path_stride);
    }
    sim.validate();

    Exhaustion exhaustion = Exhaustion::balls(m);
    if (spec.contains("exhaustion")) {
        const json& e = spec["exhaustion"];
        const auto kind = e.value("kind", std::string("balls"));
        Exhaustion::Kind k;
        if (kind == "balls") {
            k = Exhaustion::Kind::balls;
        } else if (kind == "boxes") {
            k = Exhaustion::Kind::boxes;
        } else {
            throw ParseError("exhaustion.kind", "unknown exhaustion kind '" + kind + "'");
        }
        std::vector<double> center(m, 0.0);
        if (e.contains("center")) center = vec_from_json(e["center"], m, "exhaustion.center");
        exhaustion = Exhaustion(k, std::move(center), e.value("step", 1.0));
    }

    return LoadedModel{std::move(*model), std::move(domain), sim, std::move(exhaustion),
                       spec.value("irreducible", false), spec};
}

LoadedModel load_model_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("byte " + std::to_string(e.byte), e.what());
    }
    try {
        return load_model(j);
    } catch (const json::exception& e) {
        // Type errors from nlohmann (e.g. string where a number was expected).
        throw ParseError("", e.what());
    }
}

LoadedModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open model file");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return load_model_text(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path, e.what());
    }
}

} // namespace stochar
