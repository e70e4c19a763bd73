#pragma once

// Symmetric cutoff equilibrium of the two-player coordination game, its
// one-step failure hazard, and the hazard profile over beliefs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "opacity/belief.hpp"
#include "opacity/model.hpp"
#include "opacity/numeric.hpp"

namespace opacity {

/// delta R Pr(theta=1 | x) Pr(x_j >= x | x_i = x) - w, opponent using cutoff x.
inline double indifference_residual(double x, const CoordinationGame& g, const ObservationChannel& ch) {
    if (!std::isfinite(x)) throw NumericalError("indifference_residual: non-finite cutoff");
    const double s = ch.signal_sd();
    const double p = posterior_binary(x, g.q, s);
    const double cont = p * normal_sf((x - 1.0) / s) + (1.0 - p) * normal_sf(x / s);
    return g.delta * g.R * p * cont - g.w;
}

enum class EquilibriumKind { interior, all_continue, all_withdraw };

inline const char* to_string(EquilibriumKind k) {
    switch (k) {
        case EquilibriumKind::interior: return "interior";
        case EquilibriumKind::all_continue: return "all_continue";
        case EquilibriumKind::all_withdraw: return "all_withdraw";
    }
    return "?";
}

struct ThresholdEquilibrium {
    EquilibriumKind kind = EquilibriumKind::interior;
    double x_star = 0.0;   ///< -inf for all_continue, +inf for all_withdraw
    double c_star = 0.0;   ///< posterior at x_star
    double residual = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    ObservationChannel channel;
    CoordinationGame game;

    double signal_sd() const { return channel.signal_sd(); }
};

struct SolverOptions {
    double tol = 1e-10;         ///< residual tolerance
    double xtol = 1e-12;        ///< bracket width at which bisection stops
    int scan_points = 10000;
    bool auto_expand = true;
    double cap_sd_multiple = 40.0;  ///< bracket half-width cap is 1 + cap_sd_multiple * s
    std::optional<double> lo;       ///< default bracket 0.5 -/+ (1 + 8 s)
    std::optional<double> hi;
};

/// Scan of the residual on a uniform grid; the solver's diagnostics.
struct ResidualScan {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> x;
    std::vector<double> r;
    std::vector<std::size_t> up;    ///< index i with r[i] < 0 <= r[i+1]
    std::vector<std::size_t> down;  ///< index i with r[i] >= 0 > r[i+1]
};

inline ResidualScan scan_residual(const CoordinationGame& g, const ObservationChannel& ch, double lo, double hi,
                                  int points) {
    ResidualScan sc;
    sc.lo = lo;
    sc.hi = hi;
    sc.x.resize(static_cast<std::size_t>(points));
    sc.r.resize(sc.x.size());
    for (std::size_t i = 0; i < sc.x.size(); ++i) {
        sc.x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        sc.r[i] = indifference_residual(sc.x[i], g, ch);
    }
    for (std::size_t i = 0; i + 1 < sc.x.size(); ++i) {
        if (sc.r[i] < 0.0 && sc.r[i + 1] >= 0.0) sc.up.push_back(i);
        if (sc.r[i] >= 0.0 && sc.r[i + 1] < 0.0) sc.down.push_back(i);
    }
    return sc;
}

namespace detail {

inline std::string scan_diagnostics(const ResidualScan& sc) {
    char buf[256];
    const auto [mn, mx] = std::minmax_element(sc.r.begin(), sc.r.end());
    std::snprintf(buf, sizeof buf, "bracket [%.6g, %.6g], %zu points, residual range [%.6g, %.6g], up-crossings %zu",
                  sc.lo, sc.hi, sc.x.size(), *mn, *mx, sc.up.size());
    std::string s = buf;
    for (std::size_t i : sc.up) {
        std::snprintf(buf, sizeof buf, "; up near x=%.9g", sc.x[i]);
        s += buf;
    }
    return s;
}

}  // namespace detail

/// Cutoff equilibrium by grid scan plus bisection. Each up-crossing of the
/// residual is an equilibrium cutoff; a unique one is required. Corners are
/// classified when the capped bracket holds no up-crossing.
inline ThresholdEquilibrium solve_threshold(const CoordinationGame& g, const ObservationChannel& ch,
                                            const SolverOptions& opt = {}) {
    g.validate();
    ch.validate();
    if (opt.scan_points < 3) throw ConfigError("scan_points must be >= 3");
    const double s = ch.signal_sd();
    double lo = opt.lo.value_or(0.5 - (1.0 + 8.0 * s));
    double hi = opt.hi.value_or(0.5 + (1.0 + 8.0 * s));
    if (!(lo < hi)) throw ConfigError("bracket must satisfy lo < hi");
    const double center = 0.5 * (lo + hi);
    const double cap = std::max(0.5 * (hi - lo), 1.0 + opt.cap_sd_multiple * s);

    ThresholdEquilibrium eq;
    eq.channel = ch;
    eq.game = g;
    for (;;) {
        const ResidualScan sc = scan_residual(g, ch, lo, hi, opt.scan_points);
        eq.bracket_lo = lo;
        eq.bracket_hi = hi;
        if (sc.up.size() > 1)
            throw NumericalError("non-monotone residual: multiple cutoff equilibria; " + detail::scan_diagnostics(sc));
        if (sc.up.size() == 1) {
            const std::size_t i = sc.up.front();
            double a = sc.x[i], b = sc.x[i + 1];
            double ra = sc.r[i], rb = sc.r[i + 1];
            while (b - a > opt.xtol || std::min(std::abs(ra), std::abs(rb)) > opt.tol) {
                const double m = 0.5 * (a + b);
                if (m <= a || m >= b) break;
                const double rm = indifference_residual(m, g, ch);
                if (rm < 0.0) a = m, ra = rm;
                else b = m, rb = rm;
            }
            const bool pick_a = std::abs(ra) < std::abs(rb);
            eq.kind = EquilibriumKind::interior;
            eq.x_star = pick_a ? a : b;
            eq.residual = pick_a ? ra : rb;
            eq.c_star = posterior_binary(eq.x_star, g.q, s);
            return eq;
        }
        const double half = 0.5 * (hi - lo);
        if (!opt.auto_expand) throw NumericalError("no sign change on bracket; " + detail::scan_diagnostics(sc));
        if (half >= cap) {
            const bool nonneg_left = sc.r.front() >= 0.0;
            const bool any_nonneg = std::any_of(sc.r.begin(), sc.r.end(), [](double r) { return r >= 0.0; });
            if (nonneg_left) {
                eq.kind = EquilibriumKind::all_continue;
                eq.x_star = -INFINITY;
                eq.c_star = 0.0;
            } else if (!any_nonneg) {
                eq.kind = EquilibriumKind::all_withdraw;
                eq.x_star = INFINITY;
                eq.c_star = 1.0;
            } else {
                throw NumericalError("residual pattern not classifiable; " + detail::scan_diagnostics(sc));
            }
            eq.residual = sc.r.front();
            return eq;
        }
        const double nh = std::min(2.0 * half, cap);
        lo = center - nh;
        hi = center + nh;
    }
}

/// 1 - (1 - Phi((x* - theta)/s))^2: at least one of two signals falls below x*.
inline double one_step_failure_prob(double x_star, int theta, double s) {
    const double cont = normal_sf((x_star - theta) / s);
    return 1.0 - cont * cont;
}

inline double one_step_failure_prob(const ThresholdEquilibrium& eq, int theta) {
    if (theta != 0 && theta != 1) throw ConfigError("theta must be 0 or 1");
    switch (eq.kind) {
        case EquilibriumKind::all_continue: return 0.0;
        case EquilibriumKind::all_withdraw: return 1.0;
        case EquilibriumKind::interior: break;
    }
    return one_step_failure_prob(eq.x_star, theta, eq.signal_sd());
}

/// Pr(at least one withdrawal at a date), averaged over the prior.
inline double one_step_failure_prob_prior(const ThresholdEquilibrium& eq) {
    const double q = eq.game.q;
    return q * one_step_failure_prob(eq, 1) + (1.0 - q) * one_step_failure_prob(eq, 0);
}

struct TriggerInfo {
    double b_dagger = 0.0;
    double left_slope = 0.0;
    double right_slope = 0.0;
    double gap = 0.0;    ///< hazard jump h(b-) - h(b+)
    double kappa = 0.0;  ///< right_slope - left_slope of the hazard
};

struct HazardProfile {
    std::vector<double> beliefs;
    std::vector<double> hazard;
    std::vector<int> withdraw;  ///< 1 where the holder of that belief withdraws
    std::optional<TriggerInfo> trigger;
};

/// Failure probability this date for a player holding posterior b: 1 if b is
/// below the cutoff belief, else the chance that the opponent withdraws.
inline double hazard_at_belief(const ThresholdEquilibrium& eq, double b) {
    switch (eq.kind) {
        case EquilibriumKind::all_continue: return 0.0;
        case EquilibriumKind::all_withdraw: return 1.0;
        case EquilibriumKind::interior: break;
    }
    if (b < eq.c_star) return 1.0;
    const double s = eq.signal_sd();
    return b * normal_cdf((eq.x_star - 1.0) / s) + (1.0 - b) * normal_cdf(eq.x_star / s);
}

inline HazardProfile hazard_profile(const ThresholdEquilibrium& eq, const std::vector<double>& belief_grid,
                                    double p_min = 0.05) {
    HazardProfile hp;
    hp.beliefs = belief_grid;
    for (double b : belief_grid) {
        hp.hazard.push_back(hazard_at_belief(eq, b));
        const bool w = eq.kind == EquilibriumKind::all_withdraw ||
                       (eq.kind == EquilibriumKind::interior && b < eq.c_star);
        hp.withdraw.push_back(w ? 1 : 0);
    }
    if (eq.kind != EquilibriumKind::interior) return hp;
    const double s = eq.signal_sd();
    const double a1 = normal_cdf((eq.x_star - 1.0) / s), a0 = normal_cdf(eq.x_star / s);
    TriggerInfo t;
    t.b_dagger = eq.c_star;
    t.left_slope = 0.0;
    t.right_slope = a1 - a0;
    t.gap = 1.0 - (eq.c_star * a1 + (1.0 - eq.c_star) * a0);
    t.kappa = t.right_slope - t.left_slope;
    // The jump must also be visible on the grid itself.
    double grid_jump = 0.0;
    for (std::size_t i = 0; i + 1 < hp.hazard.size(); ++i)
        grid_jump = std::max(grid_jump, hp.hazard[i] - hp.hazard[i + 1]);
    if (t.gap >= p_min && grid_jump >= p_min) hp.trigger = t;
    return hp;
}

}  // namespace opacity
