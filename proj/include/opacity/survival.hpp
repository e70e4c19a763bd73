#pragma once

// Extraction model: Kalman belief filter, trigger-policy survival value by
// backward induction on a belief-mean grid, the recursion check, concavity
// probe, concave envelope and Jensen gap.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/numeric.hpp"

namespace opacity {

/// Quadrature tolerance of the survival DP; doubling the rule must move V_T by less.
inline constexpr double kQuadTol = 1e-8;

/// One predict/correct step of the scalar Kalman filter.
inline GaussianBelief belief_update(const GaussianBelief& prior, double x, double y, const ExtractionModel& m) {
    const double mean_pred = prior.mean - m.alpha * x;
    const double var_pred = prior.std * prior.std + m.shock_std * m.shock_std;
    const double r = m.obs_variance();
    if (!std::isfinite(r)) return {mean_pred, std::sqrt(var_pred)};
    if (var_pred + r == 0.0) return {y, 0.0};
    const double k = var_pred / (var_pred + r);
    return {mean_pred + k * (y - mean_pred), std::sqrt(var_pred * (1.0 - k))};
}

/// Steady-state variances of the filter: predicted P, filtered P_post, the
/// spread of the filtered mean around the predicted mean, and the std of the
/// next state given the filtered belief.
struct FilterVariances {
    double p_prior = 0.0;
    double p_post = 0.0;
    double spread = 0.0;
    double surv_sd = 0.0;
};

inline FilterVariances steady_state_filter(const ExtractionModel& m) {
    const double q = m.shock_std * m.shock_std;
    const double r = m.obs_variance();
    FilterVariances f;
    f.p_prior = 0.5 * (q + std::sqrt(q * q + 4.0 * q * r));
    f.p_post = f.p_prior + r > 0.0 ? f.p_prior * r / (f.p_prior + r) : 0.0;
    f.spread = std::sqrt(std::max(0.0, f.p_prior - f.p_post));
    f.surv_sd = std::sqrt(f.p_prior);
    return f;
}

struct DpOptions {
    std::size_t grid_points = 2001;
    double grid_lo = 0.0;
    double grid_hi = 1.0;
    int cell_nodes = 2;    ///< Gauss-Legendre nodes per integration cell
    double z_max = 9.0;    ///< integration range in standard-normal units
    /// Replaces the cell rule with fixed nodes for E[f(Z)], Z ~ N(0,1).
    std::optional<std::vector<QuadNode>> discrete_rule;
    std::optional<double> spread_override;
    std::optional<double> surv_sd_override;
    double coarse_grid_warning = 1e-4;  ///< interpolation error estimate that triggers a warning
};

struct DpResult {
    std::vector<SurvivalCurve> curves;  ///< curves[t-1] = V_t, t = 1..T
    FilterVariances filter;
    std::vector<std::string> warnings;

    const SurvivalCurve& at(int t) const { return curves.at(static_cast<std::size_t>(t - 1)); }
};

/// Action as a function of the filtered belief mean. The action must be
/// constant on each side of switch_point (or constant everywhere).
struct ActionRule {
    std::function<double(double)> action;
    std::optional<double> switch_point;

    static ActionRule from(const TriggerPolicy& p) {
        return {[p](double b) { return p.action(b); }, p.b_dagger};
    }
    static ActionRule constant(double x) {
        return {[x](double) { return x; }, std::nullopt};
    }
};

namespace detail {

/// Breakpoints of the integrand in filtered-mean space on [a, b]: the action
/// switch and every point where the next mean lands on a grid node (the
/// interpolant of V_{t-1} has a kink there).
inline std::vector<double> cell_breaks(double a, double b, const ExtractionModel& model, const ActionRule& rule,
                                       double lo, double hi, std::size_t n) {
    std::vector<double> side{a};
    if (rule.switch_point && *rule.switch_point > a && *rule.switch_point < b) side.push_back(*rule.switch_point);
    side.push_back(b);
    std::vector<double> out;
    const double h = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t s = 0; s + 1 < side.size(); ++s) {
        const double ua = side[s], ub = side[s + 1];
        const double shift = model.alpha * rule.action(0.5 * (ua + ub));
        out.push_back(ua);
        const double ka = std::max(0.0, std::ceil((ua - shift - lo) / h));
        const double kb = std::min(static_cast<double>(n - 1), std::floor((ub - shift - lo) / h));
        for (double k = ka; k <= kb; k += 1.0) {
            const double u = lo + k * h + shift;
            if (u > out.back() && u < ub) out.push_back(u);
        }
    }
    out.push_back(b);
    // Cells beyond the grid (where the next mean is clamped) can be wide;
    // keep every cell within one grid step or an eighth of the range scale.
    const double max_width = std::max(h, (b - a) / 144.0);
    std::vector<double> fine{out.front()};
    for (std::size_t i = 1; i < out.size(); ++i) {
        const double w = out[i] - out[i - 1];
        const auto pieces = static_cast<int>(std::ceil(w / max_width - 1e-9));
        for (int k = 1; k < pieces; ++k) fine.push_back(out[i - 1] + w * k / pieces);
        fine.push_back(out[i]);
    }
    return fine;
}

/// Nodes and probability weights for E[f(m~)], m~ ~ N(m, spread^2).
inline std::vector<QuadNode> belief_nodes(double m, double spread, const ExtractionModel& model,
                                          const ActionRule& rule, const DpOptions& opt,
                                          const std::vector<QuadNode>& gl) {
    std::vector<QuadNode> out;
    if (opt.discrete_rule) {
        for (const auto& nd : *opt.discrete_rule) out.push_back({m + spread * nd.x, nd.w});
        return out;
    }
    if (spread == 0.0) return {{m, 1.0}};
    const auto br = cell_breaks(m - opt.z_max * spread, m + opt.z_max * spread, model, rule, opt.grid_lo,
                                opt.grid_hi, opt.grid_points);
    double wsum = 0.0;
    for (std::size_t p = 0; p + 1 < br.size(); ++p) {
        const double half = 0.5 * (br[p + 1] - br[p]), mid = 0.5 * (br[p] + br[p + 1]);
        for (const auto& nd : gl) {
            const double u = mid + half * nd.x;
            const double w = half * nd.w * normal_pdf((u - m) / spread);
            out.push_back({u, w});
            wsum += w;
        }
    }
    for (auto& nd : out) nd.w /= wsum;
    return out;
}

/// One row of the transition operator: V_t(m_i) = sum_j coef[j - first] V_{t-1}(m_j).
struct TransitionRow {
    std::size_t first = 0;
    std::vector<double> coef;
};

inline TransitionRow transition_row(double m, const ExtractionModel& model, const ActionRule& rule,
                                    const FilterVariances& fv, const DpOptions& opt,
                                    const std::vector<QuadNode>& gl, std::vector<double>& scratch) {
    const std::size_t n = opt.grid_points;
    const double h = (opt.grid_hi - opt.grid_lo) / static_cast<double>(n - 1);
    std::fill(scratch.begin(), scratch.end(), 0.0);
    std::size_t jmin = n, jmax = 0;
    for (const auto& nd : belief_nodes(m, fv.spread, model, rule, opt, gl)) {
        const double x = rule.action(nd.x);
        const double mean_next = nd.x - model.alpha * x;
        const double w = nd.w * normal_cdf_scaled(mean_next - model.s_fail, fv.surv_sd);
        const double pos = (std::clamp(mean_next, opt.grid_lo, opt.grid_hi) - opt.grid_lo) / h;
        auto j = static_cast<std::size_t>(pos);
        if (j >= n - 1) j = n - 2;
        const double t = pos - static_cast<double>(j);
        scratch[j] += w * (1.0 - t);
        scratch[j + 1] += w * t;
        jmin = std::min(jmin, j);
        jmax = std::max(jmax, j + 1);
    }
    TransitionRow row;
    if (jmin > jmax) return row;
    row.first = jmin;
    row.coef.assign(scratch.begin() + static_cast<long>(jmin), scratch.begin() + static_cast<long>(jmax + 1));
    return row;
}

inline FilterVariances resolve_filter(const ExtractionModel& model, const DpOptions& opt) {
    FilterVariances fv = steady_state_filter(model);
    if (opt.spread_override) fv.spread = *opt.spread_override;
    if (opt.surv_sd_override) fv.surv_sd = *opt.surv_sd_override;
    return fv;
}

inline double max_interp_error(const std::vector<double>& v) {
    double e = 0.0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) e = std::max(e, std::abs(v[i + 1] - 2.0 * v[i] + v[i - 1]) / 8.0);
    return e;
}

}  // namespace detail

/// V_t for t = 1..T on a uniform grid of predicted belief means.
/// V_t(m) = E[ S(m~) V_{t-1}(m~ - alpha x(m~)) ], m~ ~ N(m, spread^2), V_0 = 1.
inline DpResult survival_value_dp(const ExtractionModel& model, const ActionRule& rule, int T,
                                  const DpOptions& opt = {}) {
    model.validate();
    if (T < 1) throw ConfigError("horizon must be >= 1");
    if (opt.grid_points < 2) throw ConfigError("grid needs at least two points");
    if (!(opt.grid_lo < opt.grid_hi)) throw ConfigError("grid range must satisfy lo < hi");
    if (opt.cell_nodes < 1) throw ConfigError("cell_nodes must be >= 1");
    DpResult res;
    res.filter = detail::resolve_filter(model, opt);
    const auto grid = uniform_grid(opt.grid_lo, opt.grid_hi, opt.grid_points);
    const auto gl = gauss_legendre(opt.cell_nodes);
    std::vector<detail::TransitionRow> rows(grid.size());
    std::vector<double> scratch(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        rows[i] = detail::transition_row(grid[i], model, rule, res.filter, opt, gl, scratch);

    std::vector<double> prev(grid.size(), 1.0);
    for (int t = 1; t <= T; ++t) {
        std::vector<double> cur(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double acc = 0.0;
            const auto& r = rows[i];
            for (std::size_t k = 0; k < r.coef.size(); ++k) acc += r.coef[k] * prev[r.first + k];
            cur[i] = std::clamp(acc, 0.0, 1.0);
        }
        res.curves.push_back({grid, cur, t});
        prev = std::move(cur);
    }
    const double err = detail::max_interp_error(prev);
    if (err > opt.coarse_grid_warning) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "grid may be too coarse: interpolation error estimate %.3g; try grid_points >= %zu",
                      err, 2 * opt.grid_points - 1);
        res.warnings.emplace_back(buf);
    }
    return res;
}

inline DpResult survival_value_dp(const ExtractionModel& model, const TriggerPolicy& policy, int T,
                                  const DpOptions& opt = {}) {
    policy.validate(model.x_max);
    return survival_value_dp(model, ActionRule::from(policy), T, opt);
}

/// Largest change in V_T when the number of nodes per cell is doubled.
inline double quadrature_convergence(const ExtractionModel& model, const ActionRule& rule, int T,
                                     const DpOptions& opt = {}) {
    DpOptions fine = opt;
    fine.cell_nodes = 2 * opt.cell_nodes;
    const auto a = survival_value_dp(model, rule, T, opt).at(T).values;
    const auto b = survival_value_dp(model, rule, T, fine).at(T).values;
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// max_b |V_T(b) - V_1(b) E[V_{T-1}(b_1) | survive]|. The right side is
/// integrated directly over the observation y with a different rule and
/// range, reading V_{T-1} from curve_T1 (a horizon-0 curve means V_0 = 1).
inline double recursion_check(const SurvivalCurve& curve_T, const SurvivalCurve& curve_T1,
                              const ExtractionModel& model, const ActionRule& rule, const DpOptions& opt = {}) {
    if (curve_T.grid != curve_T1.grid) throw ConfigError("recursion_check: curves must share a grid");
    if (curve_T.horizon != curve_T1.horizon + 1) throw ConfigError("recursion_check: horizons must differ by one");
    const FilterVariances fv = detail::resolve_filter(model, opt);
    const auto& g = curve_T.grid;
    const double lo = g.front(), hi = g.back();
    std::vector<double> prev = curve_T1.values;
    if (curve_T1.horizon == 0) std::fill(prev.begin(), prev.end(), 1.0);

    const auto gl = gauss_legendre(opt.cell_nodes + 2);
    const double r = model.obs_variance();
    const double sd_y = std::sqrt(fv.p_prior + r);
    const double gain = sd_y > 0.0 ? fv.spread / sd_y : 0.0;  // Kalman gain
    const double z_max = opt.z_max + 1.0;

    // Accumulates survival and survival-weighted continuation at filtered mean u.
    auto visit = [&](double u, double w, double& v1, double& cont) {
        const double x = rule.action(u);
        const double next = u - model.alpha * x;
        const double s = normal_cdf_scaled(next - model.s_fail, fv.surv_sd);
        v1 += w * s;
        cont += w * s * interp_sorted(g, prev, std::clamp(next, lo, hi));
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double m = g[i];
        double v1 = 0.0, cont = 0.0;
        if (opt.discrete_rule) {
            for (const auto& nd : *opt.discrete_rule) visit(m + fv.spread * nd.x, nd.w, v1, cont);
        } else if (gain == 0.0) {
            visit(m, 1.0, v1, cont);
        } else {
            // y = m + sd_y v, filtered mean u = m + gain (y - m)
            const auto br = detail::cell_breaks(m - z_max * fv.spread, m + z_max * fv.spread, model, rule, lo, hi, g.size());
            double wsum = 0.0;
            for (std::size_t p = 0; p + 1 < br.size(); ++p) {
                const double ya = m + (br[p] - m) / gain, yb = m + (br[p + 1] - m) / gain;
                const double half = 0.5 * (yb - ya), mid = 0.5 * (ya + yb);
                for (const auto& nd : gl) {
                    const double y = mid + half * nd.x;
                    const double w = half * nd.w * normal_pdf((y - m) / sd_y) / sd_y;
                    wsum += w;
                    visit(m + gain * (y - m), w, v1, cont);
                }
            }
            v1 /= wsum;
            cont /= wsum;
        }
        const double conditional = v1 > 0.0 ? cont / v1 : 0.0;
        worst = std::max(worst, std::abs(curve_T.values[i] - v1 * conditional));
    }
    return worst;
}

struct ConcavityReport {
    double b_lo = 0.0;
    double b_hi = 0.0;
    std::size_t pairs_checked = 0;
    std::size_t violations = 0;
    double worst_gap = 0.0;  ///< largest (V(b1)+V(b2))/2 - V(mid) - tol seen
    double left_slope = 0.0;
    double right_slope = 0.0;
    double kink = 0.0;       ///< right_slope - left_slope
    std::string direction;   ///< "concave", "convex" or "none"

    bool concave() const { return violations == 0; }
};

namespace detail {

/// One-sided five-point derivative at index i, direction -1 (left) or +1.
inline double one_sided_slope(const std::vector<double>& g, const std::vector<double>& v, std::size_t i, int dir) {
    const double h = (g.back() - g.front()) / static_cast<double>(g.size() - 1);
    auto at = [&](int k) { return v[static_cast<std::size_t>(static_cast<long>(i) + dir * k)]; };
    return dir * (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) / (12.0 * h);
}

}  // namespace detail

/// Midpoint inequality for every grid pair inside (b_dagger - window,
/// b_dagger + window), plus one-sided slopes at the grid point nearest b_dagger.
inline ConcavityReport concavity_probe(const SurvivalCurve& curve, double b_dagger, double window,
                                       double tol = 1e-6) {
    curve.validate();
    const auto& g = curve.grid;
    const auto& v = curve.values;
    if (!(window > 0.0) || b_dagger - window < g.front() || b_dagger + window > g.back())
        throw ConfigError("concavity window must lie inside the grid range");
    ConcavityReport rep;
    rep.b_lo = b_dagger - window;
    rep.b_hi = b_dagger + window;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] > rep.b_lo && g[i] < rep.b_hi) idx.push_back(i);
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 2; b < idx.size(); ++b) {
            const std::size_t i = idx[a], j = idx[b];
            const double mid = 0.5 * (g[i] + g[j]);
            const auto k = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), mid) - g.begin()) - 1;
            double vm, slack = tol;
            if (g[k] == mid) {
                vm = v[k];
            } else {
                vm = interp_sorted(g, v, mid);
                const std::size_t c = std::clamp<std::size_t>(k, 1, g.size() - 3);
                const double d2 = std::max(std::abs(v[c + 1] - 2.0 * v[c] + v[c - 1]),
                                           std::abs(v[c + 2] - 2.0 * v[c + 1] + v[c]));
                slack += d2 / 8.0;
            }
            ++rep.pairs_checked;
            const double gap = 0.5 * (v[i] + v[j]) - vm - slack;
            if (gap > 0.0) {
                ++rep.violations;
                rep.worst_gap = std::max(rep.worst_gap, gap);
            }
        }
    std::size_t ic = 0;
    for (std::size_t i = 1; i < g.size(); ++i)
        if (std::abs(g[i] - b_dagger) < std::abs(g[ic] - b_dagger)) ic = i;
    if (ic >= 4 && ic + 4 < g.size()) {
        rep.left_slope = detail::one_sided_slope(g, v, ic, -1);
        rep.right_slope = detail::one_sided_slope(g, v, ic, +1);
    }
    rep.kink = rep.right_slope - rep.left_slope;
    const double scale = 1e-9 * std::max({1.0, std::abs(rep.left_slope), std::abs(rep.right_slope)});
    rep.direction = rep.kink < -scale ? "concave" : (rep.kink > scale ? "convex" : "none");
    return rep;
}

/// Largest half-width (in grid steps, scanned outward from b_dagger) on which
/// every discrete second difference is at most tol.
inline double max_concave_halfwidth(const SurvivalCurve& curve, double b_dagger, double tol = 1e-6) {
    const auto& g = curve.grid;
    const auto& v = curve.values;
    std::size_t ic = 0;
    for (std::size_t i = 1; i < g.size(); ++i)
        if (std::abs(g[i] - b_dagger) < std::abs(g[ic] - b_dagger)) ic = i;
    auto ok = [&](std::size_t i) { return v[i + 1] - 2.0 * v[i] + v[i - 1] <= tol; };
    std::size_t hw = 0;
    while (ic > hw + 1 && ic + hw + 2 < g.size() && ok(ic - hw - 1) && ok(ic + hw + 1) && ok(ic)) ++hw;
    return static_cast<double>(hw) * (g[1] - g[0]);
}

/// Widest half-width, in whole grid steps, on which concavity_probe finds no
/// violation. Violations can only grow with the window, so bisection applies.
inline double widest_concave_window(const SurvivalCurve& curve, double b_dagger, double tol = 1e-6) {
    const auto& g = curve.grid;
    const double h = g[1] - g[0];
    long lo = 1, hi = static_cast<long>(std::min(b_dagger - g.front(), g.back() - b_dagger) / h + 1e-9);
    if (hi < 1 || concavity_probe(curve, b_dagger, h, tol).violations) return 0.0;
    while (lo < hi) {
        const long mid = (lo + hi + 1) / 2;
        if (concavity_probe(curve, b_dagger, static_cast<double>(mid) * h, tol).violations == 0) lo = mid;
        else hi = mid - 1;
    }
    return static_cast<double>(lo) * h;
}

struct Concavification {
    SurvivalCurve envelope;
    std::vector<std::pair<double, double>> segments;  ///< where envelope > curve
};

/// Least concave majorant on the grid via the upper hull of the point set.
inline Concavification concavify(const SurvivalCurve& curve) {
    curve.validate();
    const auto& g = curve.grid;
    const auto& v = curve.values;
    const std::size_t n = g.size();
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < n; ++i) {
        while (hull.size() >= 2) {
            const std::size_t a = hull[hull.size() - 2], b = hull.back();
            const double cross = (g[b] - g[a]) * (v[i] - v[a]) - (v[b] - v[a]) * (g[i] - g[a]);
            if (cross >= -1e-13 * (g[i] - g[a])) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }
    Concavification out;
    out.envelope = {g, std::vector<double>(n), curve.horizon};
    for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
        const std::size_t a = hull[h], b = hull[h + 1];
        out.envelope.values[a] = v[a];
        for (std::size_t i = a + 1; i < b; ++i) {
            const double t = (g[i] - g[a]) / (g[b] - g[a]);
            out.envelope.values[i] = std::max(v[a] + t * (v[b] - v[a]), v[i]);
        }
    }
    out.envelope.values[n - 1] = v[n - 1];
    for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
        const std::size_t a = hull[h], b = hull[h + 1];
        bool strict = false;
        for (std::size_t i = a + 1; i < b; ++i) strict = strict || out.envelope.values[i] > v[i] + 1e-12;
        if (!strict) continue;
        if (!out.segments.empty() && out.segments.back().second == g[a]) out.segments.back().second = g[b];
        else out.segments.emplace_back(g[a], g[b]);
    }
    return out;
}

/// V(b) - sum p_k V(mu_k) for a Bayes-plausible distribution with mean b.
inline double jensen_gap(const SurvivalCurve& curve, double b, const std::vector<double>& support,
                         const std::vector<double>& probs, double tol = 1e-9) {
    if (support.size() != probs.size() || support.empty()) throw ConfigError("jensen_gap: support/probability size mismatch");
    double psum = 0.0, mean = 0.0, ev = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (probs[k] < 0.0) throw ConfigError("jensen_gap: negative probability");
        psum += probs[k];
        mean += probs[k] * support[k];
        ev += probs[k] * interp_sorted(curve.grid, curve.values, support[k]);
    }
    if (std::abs(psum - 1.0) > tol) throw ConfigError("jensen_gap: probabilities do not sum to one");
    if (std::abs(mean - b) > tol) throw ConfigError("jensen_gap: distribution mean differs from b (not Bayes-plausible)");
    return interp_sorted(curve.grid, curve.values, b) - ev;
}

struct ExtractionEpisode {
    bool failed = false;
    int tau_f = -1;  ///< period index t + 1 at which s_{t+1} <= s_fail
    double payoff = 0.0;
};

/// One path of the extraction model with the full time-varying filter.
/// The initial state is drawn from the belief N(s0, P) at steady-state P.
inline ExtractionEpisode simulate_extraction_episode(const ExtractionModel& m, const TriggerPolicy& policy, int T,
                                                     Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    const FilterVariances fv = steady_state_filter(m);
    GaussianBelief pred{m.s0, std::sqrt(fv.p_prior)};
    double s = m.s0 + pred.std * z(rng);
    const double r = m.obs_variance();
    ExtractionEpisode ep;
    for (int t = 0; t < T; ++t) {
        const double y = s + std::sqrt(r) * z(rng);
        const double k = pred.std * pred.std / (pred.std * pred.std + r);
        const double filtered = pred.mean + k * (y - pred.mean);
        const double var_post = pred.std * pred.std * (1.0 - k);
        const double x = policy.action(filtered);
        ep.payoff += payoff(m.payoff_kind, x);
        s = s - m.alpha * x + m.shock_std * z(rng);
        if (s <= m.s_fail) {
            ep.failed = true;
            ep.tau_f = t + 1;
            return ep;
        }
        pred = {filtered - m.alpha * x, std::sqrt(var_post + m.shock_std * m.shock_std)};
    }
    return ep;
}

}  // namespace opacity
