#pragma once

#include "stochar/config.hpp"
#include "stochar/domain.hpp"
#include "stochar/model.hpp"
#include "stochar/polynomial.hpp"
#include "stochar/simulate.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stochar {

/// Direction of a known bias in an estimate caused by censoring.
enum class BiasBound { none, lower, upper };
const char* to_string(BiasBound b) noexcept;

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0; // sample standard deviation / sqrt(n)
    std::size_t n = 0;      // samples entering the mean
    double censored_fraction = 0.0;
    BiasBound bound = BiasBound::none; // the estimate is a lower/upper bound
    std::string note;

    nlohmann::json to_json() const;
};

/// Mean and standard error of the samples, summed in index order.
MCEstimate summarize(std::span<const double> samples);

/// A real function on state space used as a running cost f or payoff g.
class ScalarFn {
public:
    static ScalarFn constant(std::size_t dim, double c);
    static ScalarFn polynomial(MultiPoly p);
    // 1{ normal . x >= offset }
    static ScalarFn indicator(std::vector<double> normal, double offset);
    static ScalarFn callable(std::size_t dim, std::function<double(std::span<const double>)> fn,
                             std::optional<double> sup_abs = std::nullopt, std::string name = "callable");

    std::size_t dim() const noexcept { return dim_; }
    double operator()(const double* x) const;
    double operator()(std::span<const double> x) const { return (*this)(x.data()); }
    bool is_zero() const noexcept { return kind_ == Kind::constant && c_ == 0.0; }
    bool is_constant() const noexcept { return kind_ == Kind::constant; }
    /// An upper bound on |f| over the closure of `where`, when one is known.
    std::optional<double> sup_abs(const Domain& where) const;
    std::string describe() const;

    // {"constant": c} | {"poly": terms} | {"indicator": {"normal": [...], "offset": c}}; a bare number is a constant.
    static ScalarFn from_json(const nlohmann::json& j, std::size_t dim, const std::string& where);

private:
    enum class Kind { constant, polynomial, indicator, callable };
    ScalarFn(std::size_t dim, Kind kind) : dim_(dim), kind_(kind), poly_(dim) {}
    std::size_t dim_;
    Kind kind_;
    double c_ = 0.0;
    MultiPoly poly_;
    CompiledPoly compiled_;
    std::vector<double> normal_;
    std::function<double(std::span<const double>)> fn_;
    std::optional<double> sup_;
    std::string name_;
};

/// Axis-aligned histogram grid: cells[i] equal bins on [lo[i], hi[i]).
struct Grid {
    std::vector<double> lo, hi;
    std::vector<std::size_t> cells;

    Grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> cells);
    std::size_t dim() const noexcept { return lo.size(); }
    std::size_t size() const noexcept;
    std::optional<std::size_t> cell_of(const double* x) const;
    std::vector<double> center(std::size_t index) const;
    double cell_volume() const;
};

struct Histogram {
    Grid grid;
    std::vector<double> mass; // per cell
    double outside = 0.0;     // mass that fell outside the grid

    double total() const;
    std::string to_csv() const; // center coordinates, mass
};

/// E_x[ int_0^tau f(x_s) ds + g(x_tau) ] over non-censored paths.
MCEstimate estimate_u_stoc(const DiffusionModel& model, const Domain& U, const ScalarFn& f, const ScalarFn& g,
                           std::span<const double> x, std::size_t n_paths, const SimConfig& cfg);

/// E_x tau^k over non-censored paths; flagged lower bound when any path is censored.
MCEstimate estimate_exit_moment(const DiffusionModel& model, const Domain& U, std::span<const double> x, int k,
                                std::size_t n_paths, const SimConfig& cfg);

/// E_x exp(delta * tau). Every path enters as exp(delta * min(tau, T)), so the
/// result is flagged a lower bound for delta > 0 and an upper bound for
/// delta < 0. delta == 0 returns exactly 1.
MCEstimate estimate_exp_moment(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                               double delta, std::size_t n_paths, const SimConfig& cfg);

/// P_x{tau > t} for t below the horizon.
MCEstimate estimate_survival(const DiffusionModel& model, const Domain& U, std::span<const double> x, double t,
                             std::size_t n_paths, const SimConfig& cfg);

/// P{tau > t_j} for each t_j on one path set; nonincreasing in t by construction.
std::vector<MCEstimate> survival_curve(const TrajectoryBatch& batch, std::span<const double> times);

struct EscapeReport {
    std::vector<double> schedule;
    std::vector<MCEstimate> upper; // P{tau > T_i}, an upper estimate of P{tau = inf}
    bool monotone = true;
    double bracket_lo = 0.0;
    double bracket_hi = 1.0;

    nlohmann::json to_json() const;
};

/// Brackets P_x{tau = infinity} by P{tau > T_i} along an increasing schedule.
/// Simulated once to the last horizon; earlier entries reuse the same paths.
EscapeReport estimate_escape_prob(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                                  std::span<const double> schedule, std::size_t n_paths, const SimConfig& cfg);

struct Phi {
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    bool convex = false;
    std::string name;

    static Phi identity();
    static Phi power(int k);
    static Phi exponential(double delta);
};

struct PhiReport {
    MCEstimate v1;          // E phi(tau)
    MCEstimate v2;          // E phi'(tau)
    double cross_check = 0; // phi(0) + int phi'(t) P{tau > t} dt, trapezoid in steps of dt
    double combined_stderr = 0;
    bool consistent = false; // |v1 - cross_check| <= 3 * combined_stderr
};

PhiReport estimate_phi_functional(const DiffusionModel& model, const Domain& U, std::span<const double> x,
                                  const Phi& phi, std::size_t n_paths, const SimConfig& cfg);

struct GreenEstimate {
    double beta = 0.0;
    MCEstimate value;
    // exp(-beta T) sup|f| / beta; absent when no bound on |f| is known.
    std::optional<double> censoring_bias_bound;
    std::optional<Histogram> density;

    nlohmann::json to_json() const;
};

/// G_beta f(x) = E_x int_0^tau f(x_s) exp(-beta s) ds. The discount is
/// integrated exactly over each step with f frozen at the left endpoint.
/// Censored paths contribute their partial integral. With a grid, the
/// discounted occupation mass of each in-U step goes to the cell of its left
/// endpoint, averaged over paths.
GreenEstimate estimate_green(const DiffusionModel& model, const Domain& U, double beta, const ScalarFn& f,
                             std::span<const double> x, std::size_t n_paths, const SimConfig& cfg,
                             const std::optional<Grid>& grid = std::nullopt);

/// E phi(x_{t ^ tau_K}) - phi(x) - E int_0^{t ^ tau_K} (L phi)(x_s) ds.
MCEstimate dynkin_residual(const DiffusionModel& model, const MultiPoly& phi, std::span<const double> x, double t,
                           const Domain& K, std::size_t n_paths, const SimConfig& cfg);

struct ResidualPoint {
    std::vector<double> x;
    double u_hat = 0.0;
    MCEstimate residual; // L u_hat + f at x
    double tolerance = 0.0;
    bool pass = false;
};

struct PdeResidualReport {
    double h = 0.0;
    std::vector<ResidualPoint> points;
    bool all_pass = false;

    std::string to_csv() const;
};

/// Central finite differences of the Monte Carlo field u_hat composed with
/// the exact b, a at each grid point. Every stencil point is driven by the
/// same per-path streams, and the residual is formed path by path so its
/// standard error accounts for that correlation. tolerance = 3 * stderr + h^2
/// (the second term covers the O(h^2) stencil truncation for fields with
/// bounded fourth derivatives of order one). Censored paths enter with their
/// partial running cost.
PdeResidualReport pde_residual_grid(const DiffusionModel& model, const Domain& U, const ScalarFn& f,
                                    const ScalarFn& g, const std::vector<std::vector<double>>& points, double h,
                                    std::size_t n_paths, const SimConfig& cfg);

} // namespace stochar
