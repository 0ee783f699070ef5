#pragma once

#include "stochar/config.hpp"
#include "stochar/domain.hpp"
#include "stochar/estimate.hpp"
#include "stochar/model.hpp"
#include "stochar/polynomial.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace stochar {

enum class RegularityVerdict { regular_evidence, irregular_evidence, inconclusive };
const char* to_string(RegularityVerdict v) noexcept;

struct RegularityProbe {
    std::vector<double> point;
    std::vector<double> h_schedule;
    std::vector<MCEstimate> estimates; // P{tau-bar <= h}, aligned with h_schedule
    RegularityVerdict verdict = RegularityVerdict::inconclusive;
    double upper_threshold = 0.99;
    double lower_threshold = 0.01;

    nlohmann::json to_json() const;
    std::string to_csv() const; // h, estimate, stderr
};

/// Fraction of paths started at the boundary point x* that leave the closure
/// by time h, for each h. All h share one path set. Regular evidence needs
/// the smallest-h estimate >= upper; irregular evidence the largest-h
/// estimate <= lower. Requires min h >= 10 dt.
RegularityProbe probe_regularity(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                 std::span<const double> h_schedule, std::size_t n_paths, const SimConfig& cfg,
                                 double upper = 0.99, double lower = 0.01);

/// w(x) = exp(-beta |x' - x*|^2) - exp(-beta |x' - x|^2), x' = x* + lambda nu,
/// with closed-form gradient and Hessian.
struct SphereWitness {
    std::vector<double> x_star;
    std::vector<double> x_prime;
    std::vector<double> normal;
    double lambda = 0.0;
    double beta = 0.0;
    double normal_form = 0.0; // nu^T a(x*) nu

    double value(std::span<const double> x) const;
    void gradient(std::span<const double> x, std::span<double> out) const;
    void hessian(std::span<const double> x, std::span<double> out) const; // row-major m x m
    /// (L w)(x) from the model's b and a at x.
    double generator(const DiffusionModel& model, std::span<const double> x) const;
};

/// Requires nu^T a(x*) nu > 1e-12 (noise acting across the boundary) and x'
/// outside the closure of U; throws ConditionError / UsageError otherwise.
SphereWitness construct_sphere_witness(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                       std::span<const double> nu, double lambda, double beta);

using Witness = std::variant<MultiPoly, SphereWitness>;

struct NicenessCertificate {
    std::vector<double> x_star;
    std::string witness;
    double radius = 0.0;
    int grid_n = 0;
    std::size_t grid_points = 0;
    double w_at_x_star = 0.0;
    double min_w = 0.0;  // over grid points outside the exclusion radius
    double max_Lw = 0.0; // over all grid points
    std::vector<double> argmin_w, argmax_Lw;
    std::optional<MultiPoly> Lw; // exact, for polynomial witnesses
    bool vanishes_at_x_star = false;
    bool positive = false;
    bool generator_negative = false;
    bool valid = false;

    nlohmann::json to_json() const;
};

/// Checks w(x*) = 0, w > 0 and L w < 0 on grid_n points per axis of the
/// cube around x*, keeping points in the ball of the given radius and in the
/// closure of U. Positivity skips points within radius / grid_n of x*.
NicenessCertificate certify_nice_point(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                                       const Witness& w, double radius, int grid_n);

struct TailReport {
    std::string variable; // "g(x_tau)" or "int f ds"
    std::vector<double> x_star;
    double delta = 0.0;
    std::vector<std::vector<double>> samples; // starting points in B_delta(x*) n U
    std::vector<double> M_schedule;
    std::vector<double> tails; // sup over samples of E[|Y| 1{|Y| > M}]
    std::vector<double> censored_fraction; // per sample
    double tolerance = 0.0;
    bool passes = false; // tail at the largest M below tolerance

    nlohmann::json to_json() const;
    std::string to_csv() const; // M, tail
};

struct TailOptions {
    std::size_t n_points = 8;
    double tolerance = 1e-3;
};

/// Empirical uniform-integrability tail of g(x_tau). Censored paths enter
/// with g at their state at the horizon.
TailReport diagnose_uid(const DiffusionModel& model, const Domain& U, const ScalarFn& g,
                        std::span<const double> x_star, double delta, std::span<const double> M_schedule,
                        std::size_t n_paths, const SimConfig& cfg, const TailOptions& opt = {});

/// As diagnose_uid with Y = int_0^tau f(x_s) ds (partial integral when censored).
TailReport diagnose_uip(const DiffusionModel& model, const Domain& U, const ScalarFn& f,
                        std::span<const double> x_star, double delta, std::span<const double> M_schedule,
                        std::size_t n_paths, const SimConfig& cfg, const TailOptions& opt = {});

struct CERow {
    int n = 0;
    double delta2 = 0.0;
    double max_probability = 0.0; // over sampled x
    double censored_fraction = 0.0;
};

struct CEReport {
    bool success = false;
    bool trivial = false; // X_n already contains the closure of U
    std::optional<int> n;
    std::optional<double> delta2;
    double delta1 = 0.0;
    std::vector<CERow> rows;
    std::string message;

    nlohmann::json to_json() const;
};

struct CEOptions {
    std::vector<int> n_schedule{1, 2, 4, 8, 16, 32};
    std::vector<double> delta2_schedule{0.5, 0.25, 0.1, 0.05, 0.02, 0.01};
    std::size_t n_points = 8;
};

/// Searches (n, delta2) with P_x{tau_{X_n} < tau} < delta1 for sampled x in
/// B_delta2(x*) n U. Paths censored before either event count as escapes, so
/// reported probabilities are upper estimates.
CEReport diagnose_ce(const DiffusionModel& model, const Domain& U, std::span<const double> x_star,
                     const Exhaustion& exhaustion, double delta1, std::size_t n_paths, const SimConfig& cfg,
                     const CEOptions& opt = {});

} // namespace stochar
