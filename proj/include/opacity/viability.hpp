#pragma once

// Monte Carlo episodes, (epsilon, lambda, T) sweeps, the limit-viability
// classifier, the opacity-monotonicity check and the opacity chooser.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opacity/belief.hpp"
#include "opacity/equilibrium.hpp"
#include "opacity/model.hpp"
#include "opacity/numeric.hpp"
#include "opacity/survival.hpp"

namespace opacity {

struct Episode {
    bool failed = false;
    std::optional<int> tau_f;  ///< date of the first withdrawal
    double payoff = 0.0;       ///< sum of delta^t R 1{theta=1} over dates before tau_f
};

/// One path of the two-player game: theta drawn once, fresh signals at each
/// date t = 0..T, failure at the first withdrawal by either player.
inline Episode simulate_episode(const ThresholdEquilibrium& eq, int T, Rng& rng) {
    const CoordinationGame& g = eq.game;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    const bool good = unif(rng) < g.q;
    const double flow = good ? g.R : 0.0;
    const double theta = good ? 1.0 : 0.0;
    const double s = eq.signal_sd();
    Episode ep;
    double disc = 1.0;
    for (int t = 0; t <= T; ++t, disc *= g.delta) {
        bool withdraw = false;
        switch (eq.kind) {
            case EquilibriumKind::all_continue: break;
            case EquilibriumKind::all_withdraw: withdraw = true; break;
            case EquilibriumKind::interior: {
                const double x1 = theta + s * z(rng), x2 = theta + s * z(rng);
                withdraw = x1 < eq.x_star || x2 < eq.x_star;
                break;
            }
        }
        if (withdraw) {
            ep.failed = true;
            ep.tau_f = t;
            return ep;
        }
        ep.payoff += disc * flow;
    }
    return ep;
}

/// Pr(tau_F <= T) in closed form: 1 - E_theta[(1 - h_theta)^(T+1)].
inline double failure_prob_closed_form(const ThresholdEquilibrium& eq, int T) {
    const double q = eq.game.q;
    const double n = static_cast<double>(T + 1);
    return 1.0 - q * std::pow(1.0 - one_step_failure_prob(eq, 1), n) -
           (1.0 - q) * std::pow(1.0 - one_step_failure_prob(eq, 0), n);
}

struct FailureEstimate {
    std::uint64_t n = 0;
    std::uint64_t failures = 0;
    double p_hat = 0.0;
    double ci = 0.0;         ///< Wilson 95% halfwidth
    double wilson_lo = 0.0;
    double wilson_hi = 0.0;
    double payoff_mean = 0.0;
    double payoff_ci = 0.0;  ///< 1.96 sd / sqrt(n)
};

namespace detail {

struct ShardTally {
    std::uint64_t failures = 0;
    RunningStats payoff;
};

inline FailureEstimate combine(const std::vector<ShardTally>& shards, std::uint64_t n) {
    FailureEstimate e;
    e.n = n;
    double sum = 0.0, sumsq = 0.0;
    for (const auto& s : shards) {
        e.failures += s.failures;
        const double c = static_cast<double>(s.payoff.count());
        sum += s.payoff.mean() * c;
        sumsq += s.payoff.variance() * (c - 1.0) + s.payoff.mean() * s.payoff.mean() * c;
    }
    const double nd = static_cast<double>(n);
    e.p_hat = static_cast<double>(e.failures) / nd;
    const Interval w = wilson_interval(e.failures, n);
    e.ci = w.halfwidth;
    e.wilson_lo = w.center - w.halfwidth;
    e.wilson_hi = w.center + w.halfwidth;
    e.payoff_mean = sum / nd;
    const double var = n > 1 ? std::max(0.0, (sumsq - sum * sum / nd) / (nd - 1.0)) : 0.0;
    e.payoff_ci = kZ95 * std::sqrt(var / nd);
    return e;
}

template <class Draw>
FailureEstimate run_episodes(std::size_t n, std::uint64_t seed, unsigned threads, Draw&& draw) {
    if (n < 1) throw ConfigError("sample size must be >= 1");
    std::vector<ShardTally> shards((n + kShardSize - 1) / kShardSize);
    for_each_shard(n, threads, [&](std::size_t shard, std::size_t begin, std::size_t end) {
        Rng rng(derive_seed(seed, {shard}));
        ShardTally& t = shards[shard];
        for (std::size_t i = begin; i < end; ++i) {
            const auto [failed, payoff] = draw(rng);
            t.failures += failed ? 1 : 0;
            t.payoff.add(payoff);
        }
    });
    return combine(shards, n);
}

}  // namespace detail

inline FailureEstimate estimate_failure_prob(const ThresholdEquilibrium& eq, int T, std::size_t n, std::uint64_t seed,
                                             unsigned threads = 1) {
    if (T < 0) throw ConfigError("horizon must be >= 0");
    return detail::run_episodes(n, seed, threads, [&](Rng& rng) {
        const Episode ep = simulate_episode(eq, T, rng);
        return std::pair{ep.failed, ep.payoff};
    });
}

inline FailureEstimate estimate_failure_prob(const ExtractionModel& m, const TriggerPolicy& policy, int T,
                                             std::size_t n, std::uint64_t seed, unsigned threads = 1) {
    m.validate();
    policy.validate(m.x_max);
    if (T < 1) throw ConfigError("horizon must be >= 1");
    return detail::run_episodes(n, seed, threads, [&](Rng& rng) {
        const ExtractionEpisode ep = simulate_extraction_episode(m, policy, T, rng);
        return std::pair{ep.failed, ep.payoff};
    });
}

/// epsilon_k = first * ratio^k, k = 0..count-1.
inline std::vector<double> geometric_ladder(double first = 0.1, double ratio = 0.5, int count = 8) {
    std::vector<double> v;
    for (int k = 0; k < count; ++k) v.push_back(first * std::pow(ratio, k));
    return v;
}

struct SweepGrid {
    std::vector<double> epsilon_ladder = geometric_ladder();
    std::vector<double> lambda_grid{1.0, 1e8};
    std::vector<int> horizons{1, 5};
    std::size_t n_samples = 1000000;
    std::uint64_t seed = 1;

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (epsilon_ladder.empty()) v.push_back("epsilon_ladder is empty");
        for (double e : epsilon_ladder)
            if (!(e > 0.0 && std::isfinite(e))) v.push_back("epsilon_ladder entries must be positive");
        for (std::size_t i = 1; i < epsilon_ladder.size(); ++i)
            if (!(epsilon_ladder[i] < epsilon_ladder[i - 1])) {
                v.push_back("epsilon_ladder must be strictly decreasing");
                break;
            }
        if (lambda_grid.empty()) v.push_back("lambda_grid is empty");
        for (std::size_t i = 1; i < lambda_grid.size(); ++i)
            if (!(lambda_grid[i] > lambda_grid[i - 1])) {
                v.push_back("lambda_grid must be strictly increasing");
                break;
            }
        if (horizons.empty()) v.push_back("horizons is empty");
        for (int T : horizons)
            if (T < 1) v.push_back("horizon must be >= 1");
        if (n_samples < 10000) v.push_back("n_samples must be >= 10000");
        return v;
    }
    void validate() const { detail::throw_if_any("SweepGrid", violations()); }
};

struct SweepCell {
    std::size_t eps_index = 0;
    std::size_t lambda_index = 0;
    int horizon = 0;
    double epsilon = 0.0;
    double lambda = 0.0;
    EquilibriumKind kind = EquilibriumKind::interior;
    double x_star = 0.0;
    double c_star = 0.0;
    FailureEstimate est;
};

struct SweepResult {
    SweepGrid grid;
    CoordinationGame game;
    ObservationChannel base;
    std::vector<SweepCell> cells;  ///< epsilon outer, then lambda, then horizon
    bool complete = false;

    const SweepCell& at(std::size_t ei, std::size_t li, int T) const {
        for (const auto& c : cells)
            if (c.eps_index == ei && c.lambda_index == li && c.horizon == T) return c;
        throw ConfigError("sweep has no cell (" + std::to_string(ei) + ", " + std::to_string(li) + ", " +
                          std::to_string(T) + ")");
    }
};

inline std::uint64_t cell_seed(std::uint64_t base, std::size_t ei, std::size_t li, int T) {
    return derive_seed(base, {ei, li, static_cast<std::uint64_t>(T)});
}

/// Seed of replicate r; replicate 0 uses the base seed itself.
inline std::uint64_t replicate_seed(std::uint64_t base, int r) {
    return r == 0 ? base : derive_seed(base, {static_cast<std::uint64_t>(r)});
}

/// Seed stream of the opacity chooser, disjoint from the sweep cells.
inline std::uint64_t choice_seed(std::uint64_t base) { return derive_seed(base, {0xC0}); }

struct SweepRunOptions {
    unsigned threads = 1;
    std::optional<std::size_t> max_cells;       ///< stop after this many new cells
    std::vector<SweepCell> completed;           ///< cells carried over from an earlier run
    std::function<void(const SweepCell&)> on_cell;  ///< called after each new cell
};

/// Runs every (epsilon, lambda, T) cell. Each cell uses its own derived seed,
/// so a resumed run reproduces the cells of an uninterrupted one.
inline SweepResult run_sweep(const CoordinationGame& game, const ObservationChannel& base, const SweepGrid& grid,
                             const SweepRunOptions& opt = {}) {
    game.validate();
    grid.validate();
    SweepResult res;
    res.grid = grid;
    res.game = game;
    res.base = base;
    std::size_t fresh = 0;
    for (std::size_t ei = 0; ei < grid.epsilon_ladder.size(); ++ei)
        for (std::size_t li = 0; li < grid.lambda_grid.size(); ++li) {
            std::optional<ThresholdEquilibrium> eq;
            for (int T : grid.horizons) {
                auto done = std::find_if(opt.completed.begin(), opt.completed.end(), [&](const SweepCell& c) {
                    return c.eps_index == ei && c.lambda_index == li && c.horizon == T;
                });
                if (done != opt.completed.end()) {
                    res.cells.push_back(*done);
                    continue;
                }
                if (opt.max_cells && fresh >= *opt.max_cells) return res;
                if (!eq) {
                    ObservationChannel ch = base.with_epsilon(grid.epsilon_ladder[ei]).with_lambda(grid.lambda_grid[li]);
                    eq = solve_threshold(game, ch);
                }
                SweepCell c;
                c.eps_index = ei;
                c.lambda_index = li;
                c.horizon = T;
                c.epsilon = grid.epsilon_ladder[ei];
                c.lambda = grid.lambda_grid[li];
                c.kind = eq->kind;
                c.x_star = eq->x_star;
                c.c_star = eq->c_star;
                c.est = estimate_failure_prob(*eq, T, grid.n_samples, cell_seed(grid.seed, ei, li, T), opt.threads);
                res.cells.push_back(c);
                ++fresh;
                if (opt.on_cell) opt.on_cell(c);
            }
        }
    res.complete = true;
    return res;
}

enum class Viability { viable_trend, non_viable_trend, inconclusive };

inline const char* to_string(Viability v) {
    switch (v) {
        case Viability::viable_trend: return "viable-trend";
        case Viability::non_viable_trend: return "non-viable-trend";
        case Viability::inconclusive: return "inconclusive";
    }
    return "?";
}

struct HorizonTrend {
    int horizon = 0;
    std::vector<double> p_hat;  ///< along the ladder, largest epsilon first
    std::vector<double> ci;
    bool vanishing = false;     ///< final p_hat < 2 CI
    bool tail_decay = false;    ///< significant drop over the last three rungs, non-increasing within CI
    bool bounded_away = false;  ///< final p_hat > 3 CI without tail decay
};

struct ViabilityVerdict {
    double lambda = 0.0;
    Viability classification = Viability::inconclusive;
    std::vector<HorizonTrend> trends;
};

/// Finite-evidence proxy for the epsilon -> 0 limit along the sweep's ladder.
inline ViabilityVerdict classify_limit_viability(const SweepResult& sweep, std::size_t lambda_index) {
    const std::size_t K = sweep.grid.epsilon_ladder.size();
    if (K < 4) throw ConfigError("classify_limit_viability: need >= 4 epsilon ladder points");
    if (lambda_index >= sweep.grid.lambda_grid.size()) throw ConfigError("classify_limit_viability: lambda index out of range");
    ViabilityVerdict v;
    v.lambda = sweep.grid.lambda_grid[lambda_index];
    bool all_viable = true, any_bounded = false;
    for (int T : sweep.grid.horizons) {
        HorizonTrend tr;
        tr.horizon = T;
        for (std::size_t ei = 0; ei < K; ++ei) {
            const auto& c = sweep.at(ei, lambda_index, T);
            tr.p_hat.push_back(c.est.p_hat);
            tr.ci.push_back(c.est.ci);
        }
        const double pK = tr.p_hat[K - 1], cK = tr.ci[K - 1];
        const double p3 = tr.p_hat[K - 4], c3 = tr.ci[K - 4];
        bool nonincreasing = true;
        for (std::size_t k = K - 4; k + 1 < K; ++k)
            nonincreasing = nonincreasing && tr.p_hat[k + 1] <= tr.p_hat[k] + tr.ci[k] + tr.ci[k + 1];
        tr.vanishing = pK < 2.0 * cK;
        tr.tail_decay = nonincreasing && pK + 2.0 * cK <= 0.8 * (p3 - 2.0 * c3);
        tr.bounded_away = pK > 3.0 * cK && !tr.tail_decay;
        all_viable = all_viable && (tr.vanishing || tr.tail_decay);
        any_bounded = any_bounded || tr.bounded_away;
        v.trends.push_back(std::move(tr));
    }
    v.classification = any_bounded ? Viability::non_viable_trend
                       : all_viable ? Viability::viable_trend
                                    : Viability::inconclusive;
    return v;
}

struct MonotonicityViolation {
    double epsilon = 0.0;
    double lambda_lo = 0.0;
    double lambda_hi = 0.0;
    double survival_lo = 0.0;
    double survival_hi = 0.0;
    double excess = 0.0;  ///< survival drop beyond the combined CI slack
};

struct MonotonicityReport {
    int horizon = 0;
    std::size_t pairs_checked = 0;
    std::vector<MonotonicityViolation> violations;
    bool pass() const { return violations.empty(); }
};

/// Survival 1 - p_hat must be weakly increasing in lambda at every epsilon:
/// for all lambda_i < lambda_j, S_j >= S_i - (CI_i + CI_j).
inline MonotonicityReport opacity_monotonicity_check(const SweepResult& sweep, int T) {
    if (sweep.grid.lambda_grid.size() < 3) throw ConfigError("opacity_monotonicity_check: need >= 3 lambda values");
    MonotonicityReport rep;
    rep.horizon = T;
    const std::size_t L = sweep.grid.lambda_grid.size();
    for (std::size_t ei = 0; ei < sweep.grid.epsilon_ladder.size(); ++ei)
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = i + 1; j < L; ++j) {
                const auto& a = sweep.at(ei, i, T);
                const auto& b = sweep.at(ei, j, T);
                ++rep.pairs_checked;
                const double drop = (1.0 - a.est.p_hat) - (1.0 - b.est.p_hat);
                const double slack = a.est.ci + b.est.ci;
                if (drop > slack)
                    rep.violations.push_back({a.epsilon, a.lambda, b.lambda, 1.0 - a.est.p_hat, 1.0 - b.est.p_hat,
                                              drop - slack});
            }
    return rep;
}

struct OpacityChoiceEntry {
    double lambda = 0.0;
    EquilibriumKind kind = EquilibriumKind::interior;
    double x_star = 0.0;
    double payoff = 0.0;
    double payoff_ci = 0.0;
    double failure = 0.0;
};

struct ExtendedGameOutcome {
    std::vector<OpacityChoiceEntry> entries;
    double lambda_star = 0.0;
    std::vector<double> tie_set;
    bool tied = false;            ///< more than one lambda in the tie set
    bool above_min = false;       ///< lambda_star > lambda_min
    double separation = 0.0;      ///< U(lambda_star) - U(lambda_min)
    double separation_ci = 0.0;   ///< 3 sqrt(ci_star^2 + ci_min^2)
    bool separated() const { return above_min && separation > separation_ci; }
};

/// Estimates U_i^T for each lambda and picks the smallest lambda whose
/// payoff CI reaches the best lower bound.
inline ExtendedGameOutcome choose_opacity(const CoordinationGame& game, const ObservationChannel& base,
                                          const std::vector<double>& lambdas, int T, std::size_t n,
                                          std::uint64_t seed, unsigned threads = 1) {
    if (lambdas.empty()) throw ConfigError("choose_opacity: empty lambda grid");
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] > lambdas[i - 1])) throw ConfigError("choose_opacity: lambda grid must be strictly increasing");
    ExtendedGameOutcome out;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        const ThresholdEquilibrium eq = solve_threshold(game, base.with_lambda(lambdas[li]));
        const FailureEstimate e = estimate_failure_prob(eq, T, n, derive_seed(seed, {li}), threads);
        out.entries.push_back({lambdas[li], eq.kind, eq.x_star, e.payoff_mean, e.payoff_ci, e.p_hat});
    }
    const auto top = std::max_element(out.entries.begin(), out.entries.end(),
                                      [](const auto& a, const auto& b) { return a.payoff < b.payoff; });
    const double floor = top->payoff - top->payoff_ci;
    std::optional<std::size_t> star;
    for (std::size_t i = 0; i < out.entries.size(); ++i)
        if (out.entries[i].payoff + out.entries[i].payoff_ci >= floor) {
            out.tie_set.push_back(out.entries[i].lambda);
            if (!star) star = i;
        }
    const auto& s = out.entries[*star];
    const auto& lo = out.entries.front();
    out.lambda_star = s.lambda;
    out.tied = out.tie_set.size() > 1;
    out.above_min = *star > 0;
    out.separation = s.payoff - lo.payoff;
    out.separation_ci = 3.0 * std::sqrt(s.payoff_ci * s.payoff_ci + lo.payoff_ci * lo.payoff_ci);
    return out;
}

}  // namespace opacity
