#pragma once

// Binary-state posteriors under the Gaussian channel, sharded posterior
// sampling, garbling by added noise, and the convex-order verifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/numeric.hpp"

namespace opacity {

/// Pr(theta = 1 | x) for prior q and signal sd s. Evaluated as a logistic of
/// the log-likelihood ratio so it never divides two underflowed densities.
inline double posterior_binary(double x, double q, double s) {
    if (!std::isfinite(x)) throw NumericalError("posterior_binary: non-finite signal");
    const double llr = logit(q) + (2.0 * x - 1.0) / (2.0 * s * s);
    return logistic(llr);
}

inline double posterior_binary(double x, double q, const ObservationChannel& ch) {
    return posterior_binary(x, q, ch.signal_sd());
}

enum class Conditioning { unconditional, given_theta0, given_theta1 };

inline const char* to_string(Conditioning c) {
    switch (c) {
        case Conditioning::unconditional: return "unconditional";
        case Conditioning::given_theta0: return "given_theta0";
        case Conditioning::given_theta1: return "given_theta1";
    }
    return "?";
}

struct PosteriorSample {
    std::vector<double> draws;
    std::vector<std::uint8_t> thetas;
    std::vector<double> signals;
    double prior = 0.5;
    ObservationChannel channel;
    Conditioning conditioning = Conditioning::unconditional;
};

inline constexpr std::size_t kShardSize = 65536;

namespace detail {

/// Runs body(shard_index, begin, end) over fixed-size shards. Shard contents
/// depend only on the shard index, so the result is independent of threads.
template <class Body>
void for_each_shard(std::size_t n, unsigned threads, Body&& body) {
    const std::size_t shards = (n + kShardSize - 1) / kShardSize;
    auto run = [&](std::size_t first, std::size_t stride) {
        for (std::size_t k = first; k < shards; k += stride)
            body(k, k * kShardSize, std::min(n, (k + 1) * kShardSize));
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(shards, 1))));
    if (threads == 1) {
        run(0, 1);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Draws theta (or fixes it), then a chain of signals x_0 = theta + N(0, eps*l0),
/// x_k = x_{k-1} + N(0, eps*(l_k - l_{k-1})). The posterior is computed under the
/// final channel. A single-element chain is the plain channel.
inline PosteriorSample sample_garbled_posteriors(double q, const ObservationChannel& base,
                                                 const std::vector<double>& lambda_chain, std::size_t n,
                                                 std::uint64_t seed, Conditioning cond = Conditioning::unconditional,
                                                 unsigned threads = 1) {
    if (n < 1) throw ConfigError("sample size must be >= 1");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("q outside (0,1)");
    if (lambda_chain.empty()) throw ConfigError("lambda chain is empty");
    base.with_lambda(lambda_chain.front()).validate();
    std::vector<double> step_sd;
    step_sd.push_back(std::sqrt(base.epsilon * lambda_chain.front()));
    for (std::size_t k = 1; k < lambda_chain.size(); ++k) {
        if (lambda_chain[k] < lambda_chain[k - 1]) throw ConfigError("not a garbling: lambda must not decrease");
        step_sd.push_back(std::sqrt(base.epsilon * (lambda_chain[k] - lambda_chain[k - 1])));
    }
    PosteriorSample out;
    out.prior = q;
    out.channel = base.with_lambda(lambda_chain.back());
    out.channel.validate();
    out.conditioning = cond;
    out.draws.resize(n);
    out.thetas.resize(n);
    out.signals.resize(n);
    const double s_final = out.channel.signal_sd();
    detail::for_each_shard(n, threads, [&](std::size_t shard, std::size_t begin, std::size_t end) {
        Rng rng(derive_seed(seed, {shard}));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i = begin; i < end; ++i) {
            std::uint8_t theta = 0;
            switch (cond) {
                case Conditioning::unconditional: theta = unif(rng) < q ? 1 : 0; break;
                case Conditioning::given_theta0: theta = 0; break;
                case Conditioning::given_theta1: theta = 1; break;
            }
            double x = theta;
            for (double sd : step_sd) x += sd * normal(rng);
            out.thetas[i] = theta;
            out.signals[i] = x;
            out.draws[i] = posterior_binary(x, q, s_final);
        }
    });
    return out;
}

inline PosteriorSample sample_posteriors(double q, const ObservationChannel& channel, std::size_t n, std::uint64_t seed,
                                         Conditioning cond = Conditioning::unconditional, unsigned threads = 1) {
    return sample_garbled_posteriors(q, channel, {channel.lambda}, n, seed, cond, threads);
}

/// Moves the channel to a weakly higher opacity. Realized on signals by adding
/// independent N(0, epsilon * (lambda_new - lambda)) noise.
inline ObservationChannel garble(const ObservationChannel& channel, double lambda_new) {
    if (!(lambda_new >= channel.lambda)) throw ConfigError("not a garbling: lambda_new < lambda");
    ObservationChannel out = channel.with_lambda(lambda_new);
    out.validate();
    return out;
}

inline double garble_signal(double x, const ObservationChannel& from, const ObservationChannel& to, Rng& rng) {
    const double var = from.epsilon * (to.lambda - from.lambda);
    if (var < 0.0) throw ConfigError("not a garbling: lambda_new < lambda");
    std::normal_distribution<double> normal(0.0, 1.0);
    return x + std::sqrt(var) * normal(rng);
}

struct ConvexTest {
    std::string name;
    std::function<double(double)> f;
};

/// Convex test functions on [0,1]. Convexity of each member is checked at
/// construction by the midpoint inequality on a grid.
class ConvexTestBattery {
public:
    explicit ConvexTestBattery(std::vector<ConvexTest> tests) : tests_(std::move(tests)) {
        for (const auto& t : tests_) check_convex(t);
    }

    /// square, |b - q|, exp, and hinges max(0, b - c) for c = 0.1, ..., 0.9.
    static ConvexTestBattery standard(double q) {
        std::vector<ConvexTest> v;
        v.push_back({"square", [](double b) { return b * b; }});
        v.push_back({"abs_dev_prior", [q](double b) { return std::abs(b - q); }});
        v.push_back({"exp", [](double b) { return std::exp(b); }});
        for (int k = 1; k <= 9; ++k) {
            const double c = 0.1 * k;
            v.push_back({"hinge_" + std::to_string(k), [c](double b) { return std::max(0.0, b - c); }});
        }
        return ConvexTestBattery(std::move(v));
    }

    const std::vector<ConvexTest>& tests() const { return tests_; }
    std::size_t size() const { return tests_.size(); }

private:
    static void check_convex(const ConvexTest& t) {
        constexpr int n = 201;
        for (int i = 0; i < n; ++i)
            for (int j = i + 2; j < n; j += 2) {
                const double a = static_cast<double>(i) / (n - 1), b = static_cast<double>(j) / (n - 1);
                const double mid = t.f(0.5 * (a + b));
                if (mid > 0.5 * (t.f(a) + t.f(b)) + 1e-12)
                    throw ConfigError("battery member '" + t.name + "' fails the midpoint convexity check");
            }
    }

    std::vector<ConvexTest> tests_;
};

struct ConvexOrderEntry {
    std::string name;
    double mean_fine = 0.0;
    double mean_coarse = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct ConvexOrderReport {
    std::vector<ConvexOrderEntry> entries;
    double mean_fine = 0.0;
    double mean_coarse = 0.0;
    double mean_tol = 0.0;
    bool mean_pass = false;

    bool all_pass() const {
        return mean_pass && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
    }
};

struct ConvexOrderOptions {
    double se_multiple = 5.0;  ///< tolerance = se_multiple * combined standard error
    double abs_tol = 0.0;      ///< added on top of the standard-error term
};

/// Checks E phi(B_fine) >= E phi(B_coarse) - tol for each battery member and
/// |E B_fine - E B_coarse| <= tol.
inline ConvexOrderReport verify_convex_order(const PosteriorSample& fine, const PosteriorSample& coarse,
                                             const ConvexTestBattery& battery, ConvexOrderOptions opt = {}) {
    if (fine.prior != coarse.prior) throw ConfigError("verify_convex_order: samples have different priors");
    if (fine.conditioning != Conditioning::unconditional || coarse.conditioning != Conditioning::unconditional)
        throw ConfigError("verify_convex_order: samples must be unconditional");
    auto tol_of = [&](const RunningStats& a, const RunningStats& b) {
        const double se = std::sqrt(a.variance() / static_cast<double>(a.count()) +
                                    b.variance() / static_cast<double>(b.count()));
        return opt.se_multiple * se + opt.abs_tol;
    };
    ConvexOrderReport rep;
    {
        const RunningStats a = summarize(fine.draws), b = summarize(coarse.draws);
        rep.mean_fine = a.mean();
        rep.mean_coarse = b.mean();
        rep.mean_tol = tol_of(a, b);
        rep.mean_pass = std::abs(a.mean() - b.mean()) <= rep.mean_tol;
    }
    for (const auto& t : battery.tests()) {
        RunningStats a, b;
        for (double x : fine.draws) a.add(t.f(x));
        for (double x : coarse.draws) b.add(t.f(x));
        ConvexOrderEntry e{t.name, a.mean(), b.mean(), tol_of(a, b), false};
        e.pass = e.mean_fine >= e.mean_coarse - e.tol;
        rep.entries.push_back(e);
    }
    return rep;
}

struct MlrpReport {
    std::size_t points = 0;
    std::size_t violations = 0;
    double worst_drop = 0.0;
    bool pass() const { return violations == 0; }
};

/// Posterior must be nondecreasing in the signal on the grid, and strictly
/// increasing wherever it is not numerically saturated at 0 or 1.
inline MlrpReport check_mlrp(double q, const ObservationChannel& ch, double x_lo, double x_hi, std::size_t n = 1000) {
    MlrpReport rep;
    rep.points = n;
    double prev = posterior_binary(x_lo, q, ch);
    for (std::size_t i = 1; i < n; ++i) {
        const double x = x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const double cur = posterior_binary(x, q, ch);
        const bool interior = prev > 1e-12 && prev < 1.0 - 1e-12;
        if (cur < prev || (interior && !(cur > prev))) {
            ++rep.violations;
            rep.worst_drop = std::max(rep.worst_drop, prev - cur);
        }
        prev = cur;
    }
    return rep;
}

}  // namespace opacity
