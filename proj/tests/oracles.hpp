#pragma once

// Closed-form references for 1D Brownian motion and friends, used only by
// the tests. Each is computed independently of the library.

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

// P_x{tau > t} for standard BM on (0,1): sine series of the heat kernel.
inline double bm_survival(double x, double t, int k_max = 199) {
    double s = 0.0;
    for (int k = 1; k <= k_max; k += 2) {
        s += 4.0 / (k * pi) * std::sin(k * pi * x) * std::exp(-k * k * pi * pi * t / 2.0);
    }
    return s;
}

// E_x tau^n on (0,1) from the same series: n! sum c_k sin(k pi x) / lambda_k^n.
inline double bm_exit_moment(double x, int n, int k_max = 4001) {
    double fact = 1.0;
    for (int i = 2; i <= n; ++i) fact *= i;
    double s = 0.0;
    for (int k = 1; k <= k_max; k += 2) {
        const double lambda = k * k * pi * pi / 2.0;
        s += 4.0 / (k * pi) * std::sin(k * pi * x) / std::pow(lambda, n);
    }
    return fact * s;
}

// Moments by hand: E tau = x(1-x), E tau^2 from 1/2 u'' = -2 x(1-x).
inline double bm_mean_exit(double x) { return x * (1.0 - x); }
inline double bm_second_moment(double x) {
    return -2.0 / 3.0 * x * x * x + x * x * x * x / 3.0 + x / 3.0;
}

// E_x exp(delta tau) on (0,1), delta < pi^2/2.
inline double bm_exp_moment(double x, double delta) {
    if (delta < 0.0) {
        const double k = std::sqrt(-2.0 * delta);
        return std::cosh(k * (x - 0.5)) / std::cosh(k / 2.0);
    }
    const double k = std::sqrt(2.0 * delta);
    return std::cos(k * (x - 0.5)) / std::cos(k / 2.0);
}

// Mass of N(0, var) on [a, b).
inline double normal_mass(double a, double b, double var) {
    const double s = std::sqrt(2.0 * var);
    return 0.5 * (std::erf(b / s) - std::erf(a / s));
}

inline std::vector<double> normal_cells(double lo, double hi, int cells, double var) {
    std::vector<double> p(cells);
    const double w = (hi - lo) / cells;
    for (int i = 0; i < cells; ++i) p[i] = normal_mass(lo + i * w, lo + (i + 1) * w, var);
    return p;
}

// BM with drift mu, unit noise, started at distance d above a level: P{ever hit}.
inline double drifted_hit_probability(double mu, double d) { return std::exp(-2.0 * mu * d); }

// Gambler's ruin for BM on (0, n) from x: P{hit n before 0}.
inline double gamblers_ruin(double x, double n) { return x / n; }

} // namespace oracle
