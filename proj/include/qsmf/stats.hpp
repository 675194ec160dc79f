#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "qsmf/errors.hpp"
#include "qsmf/rng.hpp"

namespace qsmf {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw ArgumentError("mean: empty input");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Population variance (divide by n).
inline double variance_pop(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

// Sample variance (divide by n-1).
inline double variance_sample(std::span<const double> x) {
    if (x.size() < 2) throw ArgumentError("variance_sample: need at least 2 values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double stddev_sample(std::span<const double> x) { return std::sqrt(variance_sample(x)); }

// Standardize to zero mean, unit population variance.
inline std::vector<double> zscore(std::span<const double> x) {
    if (x.size() < 2) throw UndefinedMetricError("zscore: need at least 2 values");
    const double m = mean(x);
    const double sd = std::sqrt(variance_pop(x));
    if (sd == 0.0) throw UndefinedMetricError("zscore: zero variance");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m) / sd;
    return z;
}

// Linear-interpolation percentile on a sorted copy (R type 7). p in [0,100].
inline double percentile(std::span<const double> x, double p) {
    if (x.empty()) throw ArgumentError("percentile: empty input");
    if (p < 0.0 || p > 100.0) throw ArgumentError("percentile: p outside [0,100]");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double h = (p / 100.0) * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, s.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

inline double iqr(std::span<const double> x) {
    return percentile(x, 75.0) - percentile(x, 25.0);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("pearson: size mismatch");
    if (x.size() < 3) throw InsufficientDataError("pearson: need at least 3 pairs");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

// Ranks with ties averaged, 1-based.
inline std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

// Solve A x = b for a small dense system, Gaussian elimination with partial
// pivoting. A is n*n row-major and is destroyed. Near-singular pivots zero the
// corresponding solution component instead of blowing up.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    std::vector<std::size_t> col(n);
    std::iota(col.begin(), col.end(), std::size_t{0});
    std::vector<double> x(n, 0.0);
    std::vector<bool> dropped(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(a[r * n + k]) > std::abs(a[piv * n + k])) piv = r;
        if (std::abs(a[piv * n + k]) < 1e-12) {
            dropped[k] = true;
            continue;
        }
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[k * n + c], a[piv * n + c]);
            std::swap(b[k], b[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = a[r * n + k] / a[k * n + k];
            if (f == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) a[r * n + c] -= f * a[k * n + c];
            b[r] -= f * b[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        if (dropped[k]) {
            x[k] = 0.0;
            continue;
        }
        double s = b[k];
        for (std::size_t c = k + 1; c < n; ++c) s -= a[k * n + c] * x[c];
        x[k] = s / a[k * n + k];
    }
    return x;
}

// OLS residuals of y against columns of X (n rows; X includes no intercept,
// one is added here). Collinear columns are dropped by the solver.
inline std::vector<double> ols_residuals(std::span<const double> y,
                                         const std::vector<std::vector<double>>& cols) {
    const std::size_t n = y.size();
    for (const auto& c : cols)
        if (c.size() != n) throw ArgumentError("ols_residuals: column size mismatch");
    const std::size_t p = cols.size() + 1;
    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    auto at = [&](std::size_t row, std::size_t j) -> double {
        return j == 0 ? 1.0 : cols[j - 1][row];
    };
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i) {
            xty[i] += at(r, i) * y[r];
            for (std::size_t j = 0; j < p; ++j) xtx[i * p + j] += at(r, i) * at(r, j);
        }
    const auto coef = solve_dense(std::move(xtx), std::move(xty));
    std::vector<double> resid(n);
    for (std::size_t r = 0; r < n; ++r) {
        double fit = 0.0;
        for (std::size_t j = 0; j < p; ++j) fit += coef[j] * at(r, j);
        resid[r] = y[r] - fit;
    }
    return resid;
}

// Pearson correlation of x and y after residualizing both on the same design.
inline double partial_pearson(std::span<const double> x, std::span<const double> y,
                              const std::vector<std::vector<double>>& design) {
    const auto rx = ols_residuals(x, design);
    const auto ry = ols_residuals(y, design);
    return pearson(rx, ry);
}

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap CI for a paired statistic, resampling pairs with
// replacement. The interval always contains the point estimate.
template <typename Stat>
ConfidenceInterval bootstrap_ci(std::span<const double> x, std::span<const double> y,
                                Stat stat, int n_bootstrap, std::uint64_t seed,
                                double alpha = 0.05) {
    if (x.size() != y.size()) throw ArgumentError("bootstrap_ci: size mismatch");
    if (n_bootstrap < 1) throw ArgumentError("bootstrap_ci: n_bootstrap < 1");
    const std::size_t n = x.size();
    const double point = stat(x, y);
    std::vector<double> reps;
    reps.reserve(static_cast<std::size_t>(n_bootstrap));
    std::vector<double> bx(n), by(n);
    for (int b = 0; b < n_bootstrap; ++b) {
        auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = pick(rng);
            bx[i] = x[idx];
            by[i] = y[idx];
        }
        try {
            reps.push_back(stat(bx, by));
        } catch (const Error&) {
            // degenerate resample (e.g. zero variance); skip it
        }
    }
    if (reps.empty()) return {point, point};
    ConfidenceInterval ci;
    ci.lo = std::min(percentile(reps, 100.0 * alpha / 2.0), point);
    ci.hi = std::max(percentile(reps, 100.0 * (1.0 - alpha / 2.0)), point);
    return ci;
}

}  // namespace qsmf
