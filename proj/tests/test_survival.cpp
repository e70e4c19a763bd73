#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "opacity/survival.hpp"

using namespace opacity;

namespace {

ExtractionModel preset_model() { return ExtractionModel{}; }
TriggerPolicy preset_policy() { return TriggerPolicy{0.6, 0.5, 0.0}; }

// 5-point fixture: beliefs {0, .25, .5, .75, 1}, three-node rule whose
// filtered means land on the lattice, and alpha x_high = 0.25.
struct Fixture {
    ExtractionModel model;
    TriggerPolicy policy{0.6, 0.5, 0.0};
    DpOptions opt;

    Fixture() {
        model.alpha = 0.5;
        model.x_max = 0.5;
        model.s_fail = 0.3;
        model.b_dagger = 0.6;
        opt.grid_points = 5;
        opt.discrete_rule = std::vector<QuadNode>{{-std::sqrt(3.0), 1.0 / 6.0}, {0.0, 2.0 / 3.0}, {std::sqrt(3.0), 1.0 / 6.0}};
        opt.spread_override = 0.25 / std::sqrt(3.0);
    }
};

// Exhaustive enumeration of outcome paths, no grid or interpolation.
double tree_value(const Fixture& f, double m, int T) {
    if (T == 0) return 1.0;
    const double surv_sd = steady_state_filter(f.model).surv_sd;
    const double offsets[3] = {-0.25, 0.0, 0.25};
    const double weights[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    double v = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double filtered = m + offsets[k];
        const double x = filtered > f.policy.b_dagger ? f.policy.x_high : f.policy.x_low;
        const double next = filtered - f.model.alpha * x;
        const double s = 0.5 * std::erfc(-(next - f.model.s_fail) / surv_sd / std::sqrt(2.0));
        v += weights[k] * s * tree_value(f, std::clamp(next, 0.0, 1.0), T - 1);
    }
    return v;
}

SurvivalCurve cliff_curve(double slope, std::size_t n = 101) {
    SurvivalCurve c{uniform_grid(0.0, 1.0, n), {}, 1};
    for (double b : c.grid) c.values.push_back(std::min(1.0, slope * b));
    return c;
}

// Pairwise-chord oracle: envelope(b_k) = max over i <= k <= j of the chord value.
std::vector<double> chord_envelope(const SurvivalCurve& c) {
    const auto& g = c.grid;
    const auto& v = c.values;
    std::vector<double> env = v;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j)
            for (std::size_t k = i; k <= j; ++k) {
                const double t = (g[k] - g[i]) / (g[j] - g[i]);
                env[k] = std::max(env[k], v[i] + t * (v[j] - v[i]));
            }
    return env;
}

}  // namespace

TEST(BeliefUpdate, MatchesConjugateOracle) {
    ExtractionModel m;
    m.alpha = 0.1;
    m.shock_std = 0.05;
    m.sigma0 = 0.1;
    m.lambda = 1.0;
    m.epsilon = 1.0;
    const auto post = belief_update({0.6, 0.1}, 0.5, 0.52, m);
    // tests/oracles/closed_form_oracles.py
    EXPECT_NEAR(post.mean, 0.53333333333333333333, 1e-12);
    EXPECT_NEAR(post.std, 0.07453559924999298988, 1e-12);
}

TEST(BeliefUpdate, UninformativeObservationKeepsPrediction) {
    ExtractionModel m;
    m.lambda = 1e300;
    const auto post = belief_update({0.6, 0.1}, 0.5, 5.0, m);
    EXPECT_NEAR(post.mean, 0.6 - m.alpha * 0.5, 1e-12);
    EXPECT_NEAR(post.std, std::sqrt(0.01 + m.shock_std * m.shock_std), 1e-12);
}

TEST(BeliefUpdate, ExactObservationRevealsState) {
    ExtractionModel m;
    m.shock_std = 1e-12;
    m.sigma0 = 1e-12;
    const auto post = belief_update({0.6, 0.1}, 0.5, 0.52, m);
    EXPECT_NEAR(post.mean, 0.52, 1e-12);
    EXPECT_LT(post.std, 1e-10);
}

TEST(SteadyState, IsFixedPointOfFilter) {
    const ExtractionModel m = preset_model();
    const auto fv = steady_state_filter(m);
    const auto post = belief_update({0.5, std::sqrt(fv.p_post)}, 0.0, 0.5, m);
    EXPECT_NEAR(post.std * post.std, fv.p_post, 1e-15);
    EXPECT_NEAR(fv.spread * fv.spread, fv.p_prior - fv.p_post, 1e-15);
}

TEST(Dp, NoExtractionNoNoiseNeverFails) {
    ExtractionModel m = preset_model();
    m.shock_std = 1e-9;
    DpOptions opt;
    opt.grid_points = 201;
    const auto res = survival_value_dp(m, ActionRule::constant(0.0), 5, opt);
    for (int T = 1; T <= 5; ++T)
        for (std::size_t i = 0; i < res.at(T).grid.size(); ++i)
            if (res.at(T).grid[i] > m.s_fail + 0.01) { EXPECT_NEAR(res.at(T).values[i], 1.0, 1e-14); }
}

TEST(Dp, AbsorbedBeliefsHaveZeroSurvival) {
    ExtractionModel m = preset_model();
    m.shock_std = 0.005;
    m.sigma0 = 0.005;
    DpOptions opt;
    opt.grid_points = 201;
    const auto res = survival_value_dp(m, preset_policy(), 3, opt);
    for (std::size_t i = 0; i < res.at(3).grid.size(); ++i)
        if (res.at(3).grid[i] < m.s_fail - 0.1) { EXPECT_LT(res.at(3).values[i], 1e-15); }
}

TEST(Dp, MatchesPathTreeOnFivePointFixture) {
    const Fixture f;
    const auto res = survival_value_dp(f.model, f.policy, 3, f.opt);
    for (int T = 1; T <= 3; ++T)
        for (std::size_t i = 0; i < 5; ++i)
            EXPECT_NEAR(res.at(T).values[i], tree_value(f, 0.25 * static_cast<double>(i), T), 1e-12) << T << " " << i;
}

TEST(Dp, RejectsZeroHorizon) {
    EXPECT_THROW(survival_value_dp(preset_model(), preset_policy(), 0), ConfigError);
}

TEST(Dp, CoarseGridWarns) {
    DpOptions opt;
    opt.grid_points = 11;
    const auto res = survival_value_dp(preset_model(), preset_policy(), 10, opt);
    EXPECT_FALSE(res.warnings.empty());
}

TEST(Dp, QuadratureConvergenceGate) {
    DpOptions opt;
    opt.grid_points = 401;
    EXPECT_LT(quadrature_convergence(preset_model(), ActionRule::from(preset_policy()), 10, opt), kQuadTol);
}

TEST(Dp, BoundsAndMonotonicity) {
    DpOptions opt;
    opt.grid_points = 501;
    const auto res = survival_value_dp(preset_model(), preset_policy(), 20, opt);
    for (int T = 1; T <= 20; ++T) {
        const auto& v = res.at(T).values;
        for (std::size_t i = 0; i < v.size(); ++i) {
            EXPECT_GE(v[i], 0.0);
            EXPECT_LE(v[i], 1.0);
            if (i > 0) { EXPECT_GE(v[i], v[i - 1] - 1e-12) << "T=" << T << " i=" << i; }
            if (T > 1) { EXPECT_LE(v[i], res.at(T - 1).values[i] + 1e-12); }
        }
    }
}

TEST(Recursion, HorizonOneIsTrivial) {
    DpOptions opt;
    opt.grid_points = 401;
    const auto res = survival_value_dp(preset_model(), preset_policy(), 1, opt);
    const SurvivalCurve v0{res.at(1).grid, std::vector<double>(401, 1.0), 0};
    EXPECT_LT(recursion_check(res.at(1), v0, preset_model(), ActionRule::from(preset_policy()), opt), 10.0 * kQuadTol);
}

TEST(Recursion, DeterministicNoFailureModel) {
    ExtractionModel m = preset_model();
    m.shock_std = 1e-9;
    DpOptions opt;
    opt.grid_points = 101;
    opt.grid_lo = 0.5;
    const auto res = survival_value_dp(m, ActionRule::constant(0.0), 3, opt);
    EXPECT_LT(recursion_check(res.at(3), res.at(2), m, ActionRule::constant(0.0), opt), 1e-14);
}

TEST(Recursion, StochasticModelWithinTenQuadratureTolerances) {
    const DpOptions opt;
    const auto rule = ActionRule::from(preset_policy());
    const auto res = survival_value_dp(preset_model(), rule, 5, opt);
    EXPECT_LE(recursion_check(res.at(5), res.at(4), preset_model(), rule, opt), 10.0 * kQuadTol);
}

TEST(Recursion, ExactOnFixture) {
    const Fixture f;
    const auto rule = ActionRule::from(f.policy);
    const auto res = survival_value_dp(f.model, rule, 3, f.opt);
    EXPECT_LE(recursion_check(res.at(3), res.at(2), f.model, rule, f.opt), 1e-12);
}

TEST(Concavity, LinearCurveHasNoViolationsOrKink) {
    SurvivalCurve c{uniform_grid(0.0, 1.0, 201), {}, 1};
    for (double b : c.grid) c.values.push_back(0.2 + 0.5 * b);
    const auto rep = concavity_probe(c, 0.5, 0.3);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_NEAR(rep.kink, 0.0, 1e-9);
    EXPECT_EQ(rep.direction, "none");
}

TEST(Concavity, CliffShapeIsConcaveWithSlopeDrop) {
    const auto c = cliff_curve(2.0, 201);  // kink at 0.5
    const auto rep = concavity_probe(c, 0.5, 0.3);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_NEAR(rep.left_slope, 2.0, 1e-9);
    EXPECT_NEAR(rep.right_slope, 0.0, 1e-9);
    EXPECT_EQ(rep.direction, "concave");
}

TEST(Concavity, ConvexCurveIsFlagged) {
    SurvivalCurve c{uniform_grid(0.0, 1.0, 201), {}, 1};
    for (double b : c.grid) c.values.push_back(b * b);
    const auto rep = concavity_probe(c, 0.5, 0.2);
    EXPECT_GT(rep.violations, 0u);
    EXPECT_GT(rep.worst_gap, 0.0);
}

TEST(Concavity, WindowMustFitGrid) {
    EXPECT_THROW(concavity_probe(cliff_curve(2.0), 0.9, 0.2), ConfigError);
}

TEST(Concavity, PresetConcaveAroundTriggerAtHorizonTen) {
    const auto res = survival_value_dp(preset_model(), preset_policy(), 10);
    const auto rep = concavity_probe(res.at(10), 0.6, 0.2);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_GT(rep.pairs_checked, 100000u);
}

TEST(Concavity, WidestWindowStopsAtConvexKink) {
    // concave kink at 0.5, convex kink at 0.8
    SurvivalCurve c{uniform_grid(0.0, 1.0, 101), {}, 1};
    for (double b : c.grid) c.values.push_back(0.6 - std::abs(b - 0.5) + 2.0 * std::max(0.0, b - 0.8));
    EXPECT_NEAR(widest_concave_window(c, 0.5), 0.31, 1e-9);
    EXPECT_EQ(concavity_probe(c, 0.5, 0.31).violations, 0u);
    EXPECT_GT(concavity_probe(c, 0.5, 0.32).violations, 0u);
}

TEST(Concavity, WidestWindowOfConcaveCurveReachesGridEdge) {
    SurvivalCurve c{uniform_grid(0.0, 1.0, 101), {}, 1};
    for (double b : c.grid) c.values.push_back(1.0 - (b - 0.3) * (b - 0.3));
    EXPECT_NEAR(widest_concave_window(c, 0.6), 0.4, 1e-9);
}

TEST(Concavify, ConcaveInputIsFixedPoint) {
    const auto c = cliff_curve(2.0);
    const auto out = concavify(c);
    EXPECT_EQ(out.envelope.values, c.values);
    EXPECT_TRUE(out.segments.empty());
}

TEST(Concavify, StepBecomesChordToFirstOne) {
    SurvivalCurve c{uniform_grid(0.0, 1.0, 11), {}, 1};
    for (double b : c.grid) c.values.push_back(b > 0.55 ? 1.0 : 0.0);
    const auto out = concavify(c);
    ASSERT_EQ(out.segments.size(), 1u);
    EXPECT_DOUBLE_EQ(out.segments[0].first, 0.0);
    EXPECT_DOUBLE_EQ(out.segments[0].second, 0.6);
    for (std::size_t i = 0; i <= 6; ++i) EXPECT_NEAR(out.envelope.values[i], c.grid[i] / 0.6, 1e-15);
}

TEST(Concavify, IdempotentDominatingAndMatchesChordOracle) {
    DpOptions opt;
    opt.grid_points = 301;
    const auto res = survival_value_dp(preset_model(), preset_policy(), 10, opt);
    for (int T : {1, 5, 10}) {
        const auto& c = res.at(T);
        const auto once = concavify(c);
        const auto twice = concavify(once.envelope);
        EXPECT_EQ(once.envelope.values, twice.envelope.values);
        const auto oracle = chord_envelope(c);
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            EXPECT_GE(once.envelope.values[i], c.values[i]);
            EXPECT_NEAR(once.envelope.values[i], oracle[i], 1e-12);
            bool inside = false;
            for (auto [lo, hi] : once.segments) inside = inside || (c.grid[i] > lo && c.grid[i] < hi);
            if (!inside) { EXPECT_NEAR(once.envelope.values[i], c.values[i], 1e-12); }
        }
    }
}

TEST(Jensen, DegenerateDistributionHasZeroGap) {
    const auto c = cliff_curve(2.0);
    EXPECT_DOUBLE_EQ(jensen_gap(c, 0.3, {0.3}, {1.0}), 0.0);
}

TEST(Jensen, SpreadInsideLinearRegionHasZeroGap) {
    const auto c = cliff_curve(2.0);
    EXPECT_NEAR(jensen_gap(c, 0.2, {0.1, 0.3}, {0.5, 0.5}), 0.0, 1e-15);
}

TEST(Jensen, SpreadStraddlingCliffIsPositive) {
    const auto res = survival_value_dp(preset_model(), preset_policy(), 10);
    const auto& c = res.at(10);
    const double b = 0.6, lo = 0.4, hi = 0.8;
    const double gap = jensen_gap(c, b, {lo, hi}, {0.5, 0.5});
    const double direct = interp_sorted(c.grid, c.values, b) -
                          0.5 * (interp_sorted(c.grid, c.values, lo) + interp_sorted(c.grid, c.values, hi));
    EXPECT_DOUBLE_EQ(gap, direct);
    EXPECT_GT(gap, 3e-6);
}

TEST(Jensen, RejectsImplausibleDistribution) {
    const auto c = cliff_curve(2.0);
    EXPECT_THROW(jensen_gap(c, 0.3, {0.1, 0.3}, {0.5, 0.5}), ConfigError);
    EXPECT_THROW(jensen_gap(c, 0.2, {0.1, 0.3}, {0.5, 0.6}), ConfigError);
}

TEST(Jensen, RandomPlausibleSpreadsInsideWindowAreNonnegative) {
    const auto res = survival_value_dp(preset_model(), preset_policy(), 10);
    const auto& c = res.at(10);
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double lo = 0.4 + 0.4 * u(rng) * 0.5, hi = 0.8 - 0.4 * u(rng) * 0.5;
        std::vector<double> pts{lo, hi, lo + (hi - lo) * u(rng)};
        std::vector<double> p{u(rng), u(rng), u(rng)};
        const double s = p[0] + p[1] + p[2];
        double mean = 0.0;
        for (int k = 0; k < 3; ++k) mean += (p[k] /= s) * pts[k];
        EXPECT_GE(jensen_gap(c, mean, pts, p), -1e-6);
    }
}

TEST(Simulation, ZeroExtractionSmallShocksRarelyFails) {
    ExtractionModel m = preset_model();
    m.shock_std = 0.001;
    m.sigma0 = 0.001;
    m.s0 = 0.9;
    TriggerPolicy p{0.99, 0.5, 0.0};
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) EXPECT_FALSE(simulate_extraction_episode(m, p, 5, rng).failed);
}

TEST(Simulation, PayoffCountsExtractionBeforeRevolt) {
    ExtractionModel m = preset_model();
    m.shock_std = 1e-9;
    m.sigma0 = 1e-9;
    m.s0 = 0.9;
    TriggerPolicy p{0.1, 0.5, 0.0};  // always extract 0.5, drift 0.025 per period
    Rng rng(3);
    const auto ep = simulate_extraction_episode(m, p, 100, rng);
    ASSERT_TRUE(ep.failed);
    EXPECT_EQ(ep.tau_f, 28);  // 0.9 - 0.025 t <= 0.2 first at t = 28
    EXPECT_NEAR(ep.payoff, 0.5 * 28, 1e-12);
}
