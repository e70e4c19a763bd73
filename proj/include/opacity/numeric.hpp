#pragma once

// Small numeric kit shared by every module: Gaussian special functions,
// Gauss-Legendre rules, interpolation on uniform grids, interval estimates
// and deterministic seed derivation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace opacity {

using Rng = std::mt19937_64;

inline constexpr double kZ95 = 1.959963984540054;

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF. Uses erfc so both tails keep relative accuracy.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(z).
inline double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

/// Pr(N(0, sd^2) < margin) with the sd == 0 limit taken as a step.
inline double normal_cdf_scaled(double margin, double sd) {
    if (sd == 0.0) return margin > 0.0 ? 1.0 : (margin < 0.0 ? 0.0 : 0.5);
    return normal_cdf(margin / sd);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

struct QuadNode {
    double x;
    double w;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton on the Legendre recurrence).
inline std::vector<QuadNode> gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    std::vector<QuadNode> rule(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[static_cast<std::size_t>(i)] = {-x, w};
        rule[static_cast<std::size_t>(n - 1 - i)] = {x, w};
    }
    return rule;
}

/// Linear interpolation on a uniform grid over [lo, hi]; flat outside.
inline double interp_uniform(std::span<const double> values, double lo, double hi, double x) {
    const std::size_t n = values.size();
    if (n == 1 || x <= lo) return values.front();
    if (x >= hi) return values.back();
    const double pos = (x - lo) / (hi - lo) * static_cast<double>(n - 1);
    auto i = static_cast<std::size_t>(pos);
    if (i >= n - 1) i = n - 2;
    const double t = pos - static_cast<double>(i);
    if (t == 0.0) return values[i];
    return values[i] + t * (values[i + 1] - values[i]);
}

/// Linear interpolation on an arbitrary increasing grid; flat outside.
inline double interp_sorted(std::span<const double> grid, std::span<const double> values, double x) {
    if (x <= grid.front()) return values.front();
    if (x >= grid.back()) return values.back();
    const auto it = std::upper_bound(grid.begin(), grid.end(), x);
    const auto k = static_cast<std::size_t>(it - grid.begin());
    const double x0 = grid[k - 1], x1 = grid[k];
    const double t = (x - x0) / (x1 - x0);
    if (t == 0.0) return values[k - 1];
    return values[k - 1] + t * (values[k] - values[k - 1]);
}

struct Interval {
    double center;
    double halfwidth;
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = kZ95) {
    if (n == 0) throw std::invalid_argument("wilson_interval: n must be positive");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {center, half};
}

/// Streaming mean/variance (Welford).
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    double standard_error() const { return n_ > 0 ? stddev() / std::sqrt(static_cast<double>(n_)) : 0.0; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline RunningStats summarize(std::span<const double> xs) {
    RunningStats s;
    for (double x : xs) s.add(x);
    return s;
}

/// Largest gap between the two empirical CDFs (two-sample KS statistic).
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Rejection threshold for ks_distance: 1.95 * sqrt((n1 + n2) / (n1 n2)).
inline double ks_threshold(std::size_t n1, std::size_t n2) {
    const double a = static_cast<double>(n1), b = static_cast<double>(n2);
    return 1.95 * std::sqrt((a + b) / (a * b));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Mixes a base seed with an index path into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ULL));
    return h;
}

/// 64-bit FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace opacity
