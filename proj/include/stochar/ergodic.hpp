#pragma once

#include "stochar/config.hpp"
#include "stochar/domain.hpp"
#include "stochar/estimate.hpp"
#include "stochar/model.hpp"
#include "stochar/polynomial.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stochar {

// ------------------------------------------------------------ Lyapunov

struct LyapunovLevel {
    int k = 0;
    double w_k = 0.0;   // min of w over the boundary grid of X_k
    double max_p = 0.0; // max of p = Lw - Cw - D over the grid of X_k
    std::vector<double> argmax_p;
};

struct LyapunovCertificate {
    MultiPoly w;
    double C = 0.0, D = 0.0;
    MultiPoly residual; // p = Lw - Cw - D, exact
    double growth_floor = 10.0;
    int grid_n = 0;
    std::vector<LyapunovLevel> levels{};
    double min_w = 0.0; // over every grid point
    bool w_nonnegative = false;
    bool residual_nonpositive = false;
    bool w_k_increasing = false;
    bool growth_ok = false;
    bool valid = false;
    std::optional<std::vector<double>> witness{}; // where p > 0 was found

    nlohmann::json to_json() const;
};

/// Checks Lw <= Cw + D on a grid of every X_k (k = 1..k_max) and that the
/// boundary minima w_k increase strictly past growth_floor. The residual
/// polynomial is exact; its sign is checked on grid_n points per axis.
LyapunovCertificate certify_nonexplosive(const DiffusionModel& model, const MultiPoly& w, const Exhaustion& exhaustion,
                                         double C, double D, int k_max, int grid_n, double growth_floor = 10.0);

// ---------------------------------------------------------------- cycles

struct CycleConfig {
    std::vector<double> center;
    double inner_radius = 0.0; // Gamma_2 = boundary of U
    double outer_radius = 0.0; // Gamma_1 = boundary of V

    void validate(std::size_t dim) const;
};

struct CycleSample {
    std::size_t dim = 0;
    CycleConfig config;
    std::optional<Grid> grid;
    std::size_t n_chains = 0;
    // One entry per completed cycle, chain-major, each chain in cycle order.
    std::vector<std::uint32_t> chain;
    std::vector<std::vector<double>> start_points; // X_n on Gamma_2 at sigma_{2n}
    std::vector<double> durations;                 // sigma_{2n+2} - sigma_{2n}
    // Sparse per-cycle occupation: (cell, time) pairs plus time off the grid.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> occupation;
    std::vector<double> outside;
    std::size_t censored_cycles = 0;
    std::size_t exploded_cycles = 0;

    std::size_t completed() const noexcept { return durations.size(); }
    double censored_fraction() const noexcept;
    std::string to_csv() const; // chain, cycle, duration, start point
};

struct CycleOptions {
    std::size_t n_chains = 8;
};

/// Alternating hits of Gamma_1 (leaving V) and Gamma_2 (entering U).
/// Each chain starts at center + inner_radius e_1 and runs its cycles in
/// sequence, each from where the last ended; the state at a Gamma_2 hit is
/// projected radially onto Gamma_2. A cycle exceeding cfg.horizon is
/// censored and ends its chain. Throws EstimationError if no cycle completes.
CycleSample run_cycles(const DiffusionModel& model, const CycleConfig& cycle, std::size_t n_cycles,
                       const SimConfig& cfg, const std::optional<Grid>& grid = std::nullopt,
                       const CycleOptions& opt = {});

struct ChainMeasure {
    std::string binning; // "sign", "angle", "first-coordinate"
    std::vector<double> edges; // bin edges (sign: {-1, 0, 1})
    std::vector<double> mass;
    std::vector<double> std_error; // batch means over chains
    std::size_t n_used = 0;

    nlohmann::json to_json() const;
};

/// Histogram of the embedded chain on Gamma_2 after dropping burn_in cycles
/// of every chain: 1D splits the two points, 2D bins the angle, higher
/// dimensions bin the first coordinate.
ChainMeasure embedded_chain_stationary(const CycleSample& samples, std::size_t burn_in, std::size_t n_bins = 8);

struct InvariantMeasureEstimate {
    Grid grid;
    std::vector<double> mu;      // mean occupation per cycle and cell
    double mu_outside = 0.0;     // ... off the grid
    double normalizer = 0.0;     // N: mean cycle duration
    std::vector<double> mu_tilde{}; // mu / N
    double mu_tilde_outside = 0.0;
    std::vector<double> std_error{}; // of mu_tilde, batch means over chains
    std::size_t cycles_used = 0;

    double total_mass() const; // sum of mu_tilde including the off-grid mass
    std::string to_csv() const; // centers, mu_tilde, stderr, density
};

InvariantMeasureEstimate estimate_invariant_measure(const CycleSample& samples, std::size_t burn_in = 0,
                                                    std::size_t min_cycles = 100);

/// sum_k |mu_tilde_k - p_k| + |outside - p_outside| for reference cell masses p.
double l1_distance(const InvariantMeasureEstimate& a, std::span<const double> cell_probabilities, double outside);
double l1_distance(const InvariantMeasureEstimate& a, const InvariantMeasureEstimate& b);

// ------------------------------------------------------------ recurrence

enum class RecurrenceVerdict { transient_evidence, positive_recurrent_evidence, null_recurrent_evidence, inconclusive };
const char* to_string(RecurrenceVerdict v) noexcept;

struct HitRow {
    double horizon = 0.0;
    MCEstimate hit_probability;
    MCEstimate conditional_mean; // E[hitting time | hit by the horizon]
};

struct StartReport {
    std::vector<double> start;
    std::vector<HitRow> rows;
    RecurrenceVerdict verdict = RecurrenceVerdict::inconclusive;
    std::string reason;
};

struct RecurrenceReport {
    std::vector<double> center;
    double radius = 0.0;
    std::vector<StartReport> starts;
    RecurrenceVerdict verdict = RecurrenceVerdict::inconclusive;

    nlohmann::json to_json() const;
    std::string to_csv() const; // start, horizon, hit probability, stderr, conditional mean, stderr
};

struct RecurrenceOptions {
    double recurrence_tolerance = 0.05; // hit probability >= 1 - tol counts as "reaches 1"
    double divergence_ratio = 1.5;      // conditional-mean growth across the last two horizons
    double plateau_min = 0.01;          // absolute floor for the plateau test
};

/// Hits of the closed ball B(center, radius) from each start over an
/// increasing horizon schedule (one path set per start, simulated to the
/// largest horizon).
///  - positive: hit probability >= 1 - tol and the conditional mean grows by
///    at most divergence_ratio over the last two horizons;
///  - null: the conditional mean grows by more than divergence_ratio while
///    the hit probability still rises (or has reached 1 - tol);
///  - transient: the hit probability is below 1 - tol and its last increment
///    is within max(3 stderr, plateau_min);
///  - inconclusive otherwise. The overall verdict is shared by every start,
///    else inconclusive.
RecurrenceReport classify_recurrence(const DiffusionModel& model, std::span<const double> center, double radius,
                                     const std::vector<std::vector<double>>& starts,
                                     std::span<const double> horizons, std::size_t n_paths, const SimConfig& cfg,
                                     const RecurrenceOptions& opt = {});

// ------------------------------------------------- exponential exit moments

struct ExpExitRow {
    double delta = 0.0;
    double sup_estimate = 0.0; // sup over the start grid of E exp(delta min(tau, T))
    std::vector<double> argsup;
    double std_error = 0.0;
    double tail_share = 0.0; // largest share of the mean carried by paths with tau > T/2 or censored
    bool censor_dominated = false;
};

struct ExpExitReport {
    std::vector<ExpExitRow> rows;
    std::optional<double> largest_finite_delta;
    double tail_threshold = 0.25;
    bool all_censored = false;

    nlohmann::json to_json() const;
};

/// E_x exp(delta tau_{closure}) over a start grid, every delta evaluated on
/// the same paths (horizon cfg.horizon). An estimate is censor-dominated
/// when paths with tau > T/2 or censored carry more than tail_threshold of
/// the mean at some start: the tail then grows with T, so no finite value is
/// claimed.
ExpExitReport estimate_exp_exit_bound(const DiffusionModel& model, const Domain& Ubar,
                                      std::span<const double> deltas, const std::vector<std::vector<double>>& starts,
                                      std::size_t n_paths, const SimConfig& cfg, double tail_threshold = 0.25);

} // namespace stochar
