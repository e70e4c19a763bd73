#pragma once

// Run configuration: JSON load/save with strict field checking, and the
// canonical form used for hashing.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opacity/model.hpp"
#include "opacity/numeric.hpp"
#include "opacity/survival.hpp"
#include "opacity/viability.hpp"

namespace opacity {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct GarblingConfig {
    double q = 0.4;
    double epsilon = 0.01;
    std::vector<double> lambdas{1.0, 4.0};
    std::size_t n_samples = 1000000;
};

struct DpConfig {
    std::vector<int> horizons{1, 5, 10, 20};
    double window = 0.2;  ///< concavity probe half-width around b_dagger
    double concavity_tol = 1e-6;
    DpOptions options;
};

struct ChoiceConfig {
    std::vector<double> lambda_grid;
    double epsilon = 0.05;
    int horizon = 5;
    std::size_t n_samples = 1000000;
};

struct SweepConfig {
    SweepGrid grid;
    int replicates = 1;
    std::optional<ChoiceConfig> choice;
};

struct SolverConfig {
    bool auto_expand = true;
    int scan_points = 10000;
    std::optional<double> bracket_lo;
    std::optional<double> bracket_hi;

    SolverOptions options() const {
        SolverOptions o;
        o.auto_expand = auto_expand;
        o.scan_points = scan_points;
        o.lo = bracket_lo;
        o.hi = bracket_hi;
        return o;
    }
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    std::string name = "custom";
    std::uint64_t seed = 1;
    CoordinationGame game;
    ObservationChannel channel;
    SolverConfig solver;
    ExtractionModel extraction;
    TriggerPolicy policy;
    GarblingConfig garbling;
    DpConfig dp;
    SweepConfig sweep;
};

namespace detail {

/// Walks one JSON object, converting type errors into ConfigError naming the field.
class FieldReader {
public:
    FieldReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }

    /// Rejects keys that no read() or child() call asked for.
    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown field");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        convert(*it, out, where(key));
    }

    const Json* child(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key) const { return key.empty() ? path_ : path_.empty() ? key : path_ + "." + key; }

private:
    static void convert(const Json& j, double& out, const std::string& at) {
        if (!j.is_number()) throw ConfigError(at + ": expected a number");
        out = j.get<double>();
    }
    static void convert(const Json& j, int& out, const std::string& at) {
        if (!j.is_number_integer()) throw ConfigError(at + ": expected an integer");
        out = j.get<int>();
    }
    static void convert(const Json& j, std::size_t& out, const std::string& at) {
        if (!j.is_number_unsigned()) throw ConfigError(at + ": expected a non-negative integer");
        out = j.get<std::size_t>();
    }
    static void convert(const Json& j, bool& out, const std::string& at) {
        if (!j.is_boolean()) throw ConfigError(at + ": expected true or false");
        out = j.get<bool>();
    }
    static void convert(const Json& j, std::string& out, const std::string& at) {
        if (!j.is_string()) throw ConfigError(at + ": expected a string");
        out = j.get<std::string>();
    }
    template <class T>
    static void convert(const Json& j, std::vector<T>& out, const std::string& at) {
        if (!j.is_array()) throw ConfigError(at + ": expected an array");
        out.clear();
        for (std::size_t i = 0; i < j.size(); ++i) {
            T v{};
            convert(j[i], v, at + "[" + std::to_string(i) + "]");
            out.push_back(v);
        }
    }
    template <class T>
    static void convert(const Json& j, std::optional<T>& out, const std::string& at) {
        if (j.is_null()) {
            out.reset();
            return;
        }
        T v{};
        convert(j, v, at);
        out = v;
    }

    const Json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

inline Json to_json(const RunConfig& c) {
    Json j;
    j["schema_version"] = c.schema_version;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["game"] = {{"q", c.game.q}, {"R", c.game.R}, {"delta", c.game.delta}, {"w", c.game.w},
                 {"horizon_T", c.game.horizon_T}};
    j["channel"] = {{"epsilon", c.channel.epsilon}, {"lambda", c.channel.lambda},
                    {"lambda_min", c.channel.lambda_min}, {"lambda_max", c.channel.lambda_max}};
    j["solver"] = {{"auto_expand", c.solver.auto_expand},
                   {"scan_points", c.solver.scan_points},
                   {"bracket_lo", detail::optional_json(c.solver.bracket_lo)},
                   {"bracket_hi", detail::optional_json(c.solver.bracket_hi)}};
    const auto& e = c.extraction;
    j["extraction"] = {{"alpha", e.alpha},       {"x_max", e.x_max},
                       {"s_fail", e.s_fail},     {"shock_std", e.shock_std},
                       {"sigma0", e.sigma0},     {"epsilon", e.epsilon},
                       {"lambda", e.lambda},     {"payoff", e.payoff_kind == PayoffKind::linear ? "linear" : "log1p"},
                       {"b_dagger", e.b_dagger}, {"s0", e.s0}};
    j["policy"] = {{"b_dagger", c.policy.b_dagger}, {"x_high", c.policy.x_high}, {"x_low", c.policy.x_low}};
    j["garbling"] = {{"q", c.garbling.q},
                     {"epsilon", c.garbling.epsilon},
                     {"lambdas", c.garbling.lambdas},
                     {"n_samples", c.garbling.n_samples}};
    const auto& o = c.dp.options;
    Json rule = nullptr;
    if (o.discrete_rule) {
        rule = {{"nodes", Json::array()}, {"weights", Json::array()}};
        for (const auto& nd : *o.discrete_rule) {
            rule["nodes"].push_back(nd.x);
            rule["weights"].push_back(nd.w);
        }
    }
    j["dp"] = {{"horizons", c.dp.horizons},
               {"window", c.dp.window},
               {"concavity_tol", c.dp.concavity_tol},
               {"grid_points", o.grid_points},
               {"grid_lo", o.grid_lo},
               {"grid_hi", o.grid_hi},
               {"cell_nodes", o.cell_nodes},
               {"z_max", o.z_max},
               {"discrete_rule", rule},
               {"spread_override", detail::optional_json(o.spread_override)},
               {"surv_sd_override", detail::optional_json(o.surv_sd_override)}};
    const auto& g = c.sweep.grid;
    j["sweep"] = {{"epsilon_ladder", g.epsilon_ladder}, {"lambda_grid", g.lambda_grid}, {"horizons", g.horizons},
                  {"n_samples", g.n_samples},          {"replicates", c.sweep.replicates}};
    if (c.sweep.choice) {
        const auto& ch = *c.sweep.choice;
        j["sweep"]["choice"] = {{"lambda_grid", ch.lambda_grid},
                                {"epsilon", ch.epsilon},
                                {"horizon", ch.horizon},
                                {"n_samples", ch.n_samples}};
    } else {
        j["sweep"]["choice"] = nullptr;
    }
    return j;
}

/// Parses a config. Missing fields keep their defaults; unknown fields and
/// wrong types are rejected with the field path in the message.
inline RunConfig config_from_json(const Json& j) {
    RunConfig c;
    {
        detail::FieldReader r(j, "");
        r.read("schema_version", c.schema_version);
        if (!j.contains("schema_version")) throw ConfigError("schema_version: required field missing");
        if (c.schema_version != kSchemaVersion)
            throw ConfigError("schema_version: unsupported version " + std::to_string(c.schema_version));
        r.read("name", c.name);
        std::uint64_t seed = c.seed;
        if (const Json* s = r.child("seed")) {
            if (!s->is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
            seed = s->get<std::uint64_t>();
        }
        c.seed = seed;
        if (const Json* g = r.child("game")) {
            detail::FieldReader gr(*g, "game");
            gr.read("q", c.game.q);
            gr.read("R", c.game.R);
            gr.read("delta", c.game.delta);
            gr.read("w", c.game.w);
            gr.read("horizon_T", c.game.horizon_T);
            gr.finish();
        }
        if (const Json* ch = r.child("channel")) {
            detail::FieldReader cr(*ch, "channel");
            cr.read("epsilon", c.channel.epsilon);
            cr.read("lambda", c.channel.lambda);
            cr.read("lambda_min", c.channel.lambda_min);
            cr.read("lambda_max", c.channel.lambda_max);
            cr.finish();
        }
        if (const Json* sv = r.child("solver")) {
            detail::FieldReader sr(*sv, "solver");
            sr.read("auto_expand", c.solver.auto_expand);
            sr.read("scan_points", c.solver.scan_points);
            sr.read("bracket_lo", c.solver.bracket_lo);
            sr.read("bracket_hi", c.solver.bracket_hi);
            sr.finish();
        }
        if (const Json* e = r.child("extraction")) {
            detail::FieldReader er(*e, "extraction");
            auto& m = c.extraction;
            er.read("alpha", m.alpha);
            er.read("x_max", m.x_max);
            er.read("s_fail", m.s_fail);
            er.read("shock_std", m.shock_std);
            er.read("sigma0", m.sigma0);
            er.read("epsilon", m.epsilon);
            er.read("lambda", m.lambda);
            std::string kind = m.payoff_kind == PayoffKind::linear ? "linear" : "log1p";
            er.read("payoff", kind);
            if (kind == "linear") m.payoff_kind = PayoffKind::linear;
            else if (kind == "log1p") m.payoff_kind = PayoffKind::log1p;
            else throw ConfigError("extraction.payoff: expected \"linear\" or \"log1p\"");
            er.read("b_dagger", m.b_dagger);
            er.read("s0", m.s0);
            er.finish();
        }
        if (const Json* p = r.child("policy")) {
            detail::FieldReader pr(*p, "policy");
            pr.read("b_dagger", c.policy.b_dagger);
            pr.read("x_high", c.policy.x_high);
            pr.read("x_low", c.policy.x_low);
            pr.finish();
        }
        if (const Json* gb = r.child("garbling")) {
            detail::FieldReader gr(*gb, "garbling");
            gr.read("q", c.garbling.q);
            gr.read("epsilon", c.garbling.epsilon);
            gr.read("lambdas", c.garbling.lambdas);
            gr.read("n_samples", c.garbling.n_samples);
            gr.finish();
        }
        if (const Json* d = r.child("dp")) {
            detail::FieldReader dr(*d, "dp");
            auto& o = c.dp.options;
            dr.read("horizons", c.dp.horizons);
            dr.read("window", c.dp.window);
            dr.read("concavity_tol", c.dp.concavity_tol);
            dr.read("grid_points", o.grid_points);
            dr.read("grid_lo", o.grid_lo);
            dr.read("grid_hi", o.grid_hi);
            dr.read("cell_nodes", o.cell_nodes);
            dr.read("z_max", o.z_max);
            dr.read("spread_override", o.spread_override);
            dr.read("surv_sd_override", o.surv_sd_override);
            if (const Json* rule = dr.child("discrete_rule"); rule && !rule->is_null()) {
                detail::FieldReader rr(*rule, "dp.discrete_rule");
                std::vector<double> nodes, weights;
                rr.read("nodes", nodes);
                rr.read("weights", weights);
                rr.finish();
                if (nodes.empty() || nodes.size() != weights.size())
                    throw ConfigError("dp.discrete_rule: nodes and weights must be non-empty and equal in length");
                std::vector<QuadNode> q;
                for (std::size_t i = 0; i < nodes.size(); ++i) q.push_back({nodes[i], weights[i]});
                o.discrete_rule = q;
            }
            dr.finish();
        }
        if (const Json* s = r.child("sweep")) {
            detail::FieldReader sr(*s, "sweep");
            sr.read("epsilon_ladder", c.sweep.grid.epsilon_ladder);
            sr.read("lambda_grid", c.sweep.grid.lambda_grid);
            sr.read("horizons", c.sweep.grid.horizons);
            sr.read("n_samples", c.sweep.grid.n_samples);
            sr.read("replicates", c.sweep.replicates);
            if (const Json* ch = sr.child("choice"); ch && !ch->is_null()) {
                detail::FieldReader cr(*ch, "sweep.choice");
                ChoiceConfig cc;
                cr.read("lambda_grid", cc.lambda_grid);
                cr.read("epsilon", cc.epsilon);
                cr.read("horizon", cc.horizon);
                cr.read("n_samples", cc.n_samples);
                cr.finish();
                c.sweep.choice = cc;
            }
            sr.finish();
        }
        r.finish();
    }
    c.sweep.grid.seed = c.seed;
    return c;
}

/// Checks the sections every subcommand relies on.
inline void validate(const RunConfig& c) {
    std::vector<std::string> v;
    auto add = [&](const std::string& prefix, const std::vector<std::string>& items) {
        for (const auto& s : items) v.push_back(prefix + ": " + s);
    };
    add("game", c.game.violations());
    add("channel", c.channel.violations());
    add("extraction", c.extraction.violations());
    add("policy", c.policy.violations(c.extraction.x_max));
    if (c.solver.scan_points < 3) v.push_back("solver.scan_points: must be >= 3");
    if (c.solver.bracket_lo.has_value() != c.solver.bracket_hi.has_value())
        v.push_back("solver: bracket_lo and bracket_hi must be given together");
    else if (c.solver.bracket_lo && !(*c.solver.bracket_lo < *c.solver.bracket_hi))
        v.push_back("solver: bracket_lo must be < bracket_hi");
    if (!(c.garbling.q > 0.0 && c.garbling.q < 1.0)) v.push_back("garbling.q: outside (0,1)");
    if (!(c.garbling.epsilon > 0.0)) v.push_back("garbling.epsilon: must be > 0");
    if (c.garbling.lambdas.size() < 2) v.push_back("garbling.lambdas: need at least two values");
    for (std::size_t i = 1; i < c.garbling.lambdas.size(); ++i)
        if (!(c.garbling.lambdas[i] > c.garbling.lambdas[i - 1])) {
            v.push_back("garbling.lambdas: must be strictly increasing");
            break;
        }
    for (double l : c.garbling.lambdas)
        if (!(l > 0.0)) v.push_back("garbling.lambdas: entries must be > 0");
    if (c.dp.horizons.empty()) v.push_back("dp.horizons: must not be empty");
    for (int T : c.dp.horizons)
        if (T < 1) v.push_back("dp.horizons: horizon must be >= 1");
    if (!(c.dp.window > 0.0)) v.push_back("dp.window: must be > 0");
    const bool choice_only = c.sweep.choice && c.sweep.grid.lambda_grid.empty();
    if (!choice_only) add("sweep", c.sweep.grid.violations());
    if (c.sweep.replicates < 1) v.push_back("sweep.replicates: must be >= 1");
    if (c.sweep.choice) {
        const auto& ch = *c.sweep.choice;
        if (ch.lambda_grid.empty()) v.push_back("sweep.choice.lambda_grid: must not be empty");
        if (!(ch.epsilon > 0.0)) v.push_back("sweep.choice.epsilon: must be > 0");
        if (ch.horizon < 1) v.push_back("sweep.choice.horizon: horizon must be >= 1");
        if (ch.n_samples < 1) v.push_back("sweep.choice.n_samples: must be >= 1");
    }
    detail::throw_if_any("config", v);
}

inline std::string canonical_dump(const RunConfig& c) { return to_json(c).dump(); }

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(canonical_dump(c)); }

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline Json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(source + ": malformed JSON: " + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config file not found or unreadable: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline RunConfig load_config(const std::string& path) {
    return config_from_json(parse_json_text(read_file(path), path));
}

}  // namespace opacity
