#pragma once

// Shared domain types and their invariants. No algorithms live here.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace opacity {

/// Base of every library error; carries the CLI exit code for its category.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 3) {}
};

class VerificationError : public Error {
public:
    explicit VerificationError(const std::string& what) : Error(what, 4) {}
};

namespace detail {

inline std::string join_violations(const std::string& what, const std::vector<std::string>& v) {
    std::string msg = "invalid " + what + ":";
    for (const auto& s : v) msg += "\n  - " + s;
    return msg;
}

inline void throw_if_any(const std::string& what, const std::vector<std::string>& v) {
    if (!v.empty()) throw ConfigError(join_violations(what, v));
}

inline bool finite_all(std::initializer_list<double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

/// Gaussian additive signal channel x = state + sqrt(epsilon * lambda) * noise.
struct ObservationChannel {
    double epsilon = 0.01;
    double lambda = 1.0;
    double lambda_min = 1.0;
    double lambda_max = 1e8;

    double signal_sd() const { return std::sqrt(epsilon * lambda); }

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!detail::finite_all({epsilon, lambda, lambda_min, lambda_max})) v.push_back("channel: all fields must be finite");
        if (!(epsilon > 0.0)) v.push_back("epsilon must be > 0");
        if (!(lambda_min > 0.0)) v.push_back("lambda_min must be > 0");
        if (!(lambda_min <= lambda_max)) v.push_back("lambda_min must be <= lambda_max");
        if (!(lambda >= lambda_min && lambda <= lambda_max)) v.push_back("lambda outside [lambda_min, lambda_max]");
        return v;
    }
    void validate() const { detail::throw_if_any("ObservationChannel", violations()); }

    ObservationChannel with_lambda(double l) const {
        ObservationChannel c = *this;
        c.lambda = l;
        return c;
    }
    ObservationChannel with_epsilon(double e) const {
        ObservationChannel c = *this;
        c.epsilon = e;
        return c;
    }

    bool operator==(const ObservationChannel&) const = default;
};

/// Two-player coordination benchmark with binary fundamental theta.
struct CoordinationGame {
    double q = 0.4;
    double R = 1.0;
    double delta = 0.9;
    double w = 0.2;  ///< withdrawal outside option; w = 0 is allowed but degenerate
    int horizon_T = 5;

    /// True when 0 < q < delta.
    bool collapse_regime() const { return 0.0 < q && q < delta; }

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!detail::finite_all({q, R, delta, w})) v.push_back("game: all fields must be finite");
        if (!(q > 0.0 && q < 1.0)) v.push_back("q outside (0,1)");
        if (!(R > 0.0)) v.push_back("R must be > 0");
        if (!(delta > 0.0 && delta < 1.0)) v.push_back("delta outside (0,1)");
        if (!(w >= 0.0)) v.push_back("w must be >= 0");
        if (horizon_T < 1) v.push_back("horizon must be >= 1");
        return v;
    }
    void validate() const { detail::throw_if_any("CoordinationGame", violations()); }

    bool operator==(const CoordinationGame&) const = default;
};

enum class PayoffKind { linear, log1p };

inline double payoff(PayoffKind k, double x) { return k == PayoffKind::linear ? x : std::log1p(x); }

/// Principal's extraction model: s' = s - alpha x + shock, revolt once s' <= s_fail.
struct ExtractionModel {
    double alpha = 0.05;
    double x_max = 0.5;
    double s_fail = 0.2;
    double shock_std = 0.05;
    double sigma0 = 0.05;    ///< observation noise std at lambda = 1
    double epsilon = 1.0;    ///< scales the observation variance
    double lambda = 1.0;
    PayoffKind payoff_kind = PayoffKind::linear;
    double b_dagger = 0.6;
    double s0 = 0.7;

    /// sqrt(lambda) * sigma0; strictly increasing in lambda.
    double sigma_of_lambda(double l) const { return std::sqrt(l) * sigma0; }
    double obs_variance() const {
        const double s = sigma_of_lambda(lambda);
        return epsilon * s * s;
    }

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (!detail::finite_all({alpha, x_max, s_fail, shock_std, sigma0, epsilon, lambda, b_dagger, s0}))
            v.push_back("extraction: all fields must be finite");
        if (!(alpha > 0.0)) v.push_back("alpha must be > 0");
        if (!(x_max > 0.0)) v.push_back("x_max must be > 0");
        if (!(s_fail > 0.0 && s_fail < 1.0)) v.push_back("s_fail outside (0,1)");
        if (!(shock_std > 0.0)) v.push_back("shock_std must be > 0");
        if (!(sigma0 > 0.0)) v.push_back("sigma0 must be > 0");
        if (!(epsilon > 0.0)) v.push_back("epsilon must be > 0");
        if (!(lambda > 0.0)) v.push_back("lambda must be > 0");
        if (!(b_dagger > 0.0 && b_dagger < 1.0)) v.push_back("b_dagger outside (0,1)");
        if (!(s0 > s_fail && s0 <= 1.0)) v.push_back("s0 outside (s_fail, 1]");
        return v;
    }
    void validate() const { detail::throw_if_any("ExtractionModel", violations()); }

    bool operator==(const ExtractionModel&) const = default;
};

/// Extraction level x_high strictly above the trigger, x_low at or below it.
struct TriggerPolicy {
    double b_dagger = 0.6;
    double x_high = 0.5;
    double x_low = 0.0;

    double action(double belief) const { return belief > b_dagger ? x_high : x_low; }

    std::vector<std::string> violations(double x_max) const {
        std::vector<std::string> v;
        if (!(0.0 <= x_low && x_low < x_high)) v.push_back("policy requires 0 <= x_low < x_high");
        if (!(x_high <= x_max)) v.push_back("x_high must be <= x_max");
        if (!(b_dagger > 0.0 && b_dagger < 1.0)) v.push_back("b_dagger outside (0,1)");
        return v;
    }
    void validate(double x_max) const { detail::throw_if_any("TriggerPolicy", violations(x_max)); }

    bool operator==(const TriggerPolicy&) const = default;
};

/// Gaussian summary of the belief over latent stability.
struct GaussianBelief {
    double mean = 0.0;
    double std = 0.0;
};

/// Finite-horizon survival value tabulated on an increasing belief grid.
struct SurvivalCurve {
    std::vector<double> grid;
    std::vector<double> values;
    int horizon = 0;

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (grid.size() != values.size()) v.push_back("grid and values differ in length");
        if (grid.size() < 2) v.push_back("curve needs at least two points");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1])) {
                v.push_back("grid must be strictly increasing");
                break;
            }
        for (double x : values)
            if (!(x >= 0.0 && x <= 1.0)) {
                v.push_back("values must lie in [0,1]");
                break;
            }
        return v;
    }
    void validate() const { detail::throw_if_any("SurvivalCurve", violations()); }
};

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
    if (n < 2) throw ConfigError("grid needs at least two points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.back() = hi;
    return g;
}

}  // namespace opacity
