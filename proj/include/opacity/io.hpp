#pragma once

// CSV writing, sweep CSV round-trip for resumption, and run manifests.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "opacity/config.hpp"
#include "opacity/viability.hpp"

#ifndef OPACITY_VERSION
#define OPACITY_VERSION "0.1.0"
#endif

namespace opacity {

inline const char* tool_version() { return OPACITY_VERSION; }

/// Shortest text that round-trips a double exactly.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { line(header); }

    template <class... Ts>
    CsvWriter& row(const Ts&... xs) {
        if (sizeof...(xs) != columns_) throw Error("csv row has wrong number of fields", 1);
        std::vector<std::string> f{field(xs)...};
        line(f);
        return *this;
    }

    const std::string& text() const { return out_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + path.string());
        f << out_;
    }

    static std::string field(double x) { return format_double(x); }
    static std::string field(int x) { return std::to_string(x); }
    static std::string field(unsigned x) { return std::to_string(x); }
    static std::string field(std::size_t x) { return std::to_string(x); }
    static std::string field(bool x) { return x ? "1" : "0"; }
    static std::string field(const std::string& x) { return x; }
    static std::string field(const char* x) { return x; }

private:
    void line(const std::vector<std::string>& f) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i) out_ += ',';
            out_ += f[i];
        }
        out_ += '\n';
    }

    std::size_t columns_;
    std::string out_;
};

inline std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Sweep cells -------------------------------------------------------------

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols{
        "replicate", "eps_index", "lambda_index", "horizon", "epsilon",   "lambda",    "kind",        "x_star",
        "c_star",    "n",         "failures",     "p_hat",   "ci",        "wilson_lo", "wilson_hi",   "payoff_mean",
        "payoff_ci"};
    return cols;
}

inline std::string sweep_header() {
    std::string s;
    for (const auto& c : sweep_columns()) s += (s.empty() ? "" : ",") + c;
    return s + "\n";
}

inline std::string sweep_row(int replicate, const SweepCell& c) {
    CsvWriter w(sweep_columns());
    w.row(replicate, c.eps_index, c.lambda_index, c.horizon, c.epsilon, c.lambda, std::string(to_string(c.kind)),
          c.x_star, c.c_star, static_cast<std::size_t>(c.est.n), static_cast<std::size_t>(c.est.failures),
          c.est.p_hat, c.est.ci, c.est.wilson_lo, c.est.wilson_hi, c.est.payoff_mean, c.est.payoff_ci);
    const std::string& t = w.text();
    return t.substr(t.find('\n') + 1);
}

inline EquilibriumKind kind_from_string(const std::string& s) {
    if (s == "interior") return EquilibriumKind::interior;
    if (s == "all_continue") return EquilibriumKind::all_continue;
    if (s == "all_withdraw") return EquilibriumKind::all_withdraw;
    throw ConfigError("unknown equilibrium kind '" + s + "'");
}

struct StoredCell {
    int replicate = 0;
    SweepCell cell;
};

/// Reads cells written by sweep_row. A truncated last line is dropped.
inline std::vector<StoredCell> read_sweep_csv(const std::filesystem::path& path) {
    std::vector<StoredCell> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::istringstream ss(text);
    std::string line;
    std::size_t consumed = 0;
    bool header = true;
    while (std::getline(ss, line)) {
        consumed += line.size() + 1;
        if (consumed > text.size()) break;  // no trailing newline: partial row
        if (header) {
            if (line + "\n" != sweep_header()) throw ConfigError(path.string() + ": unexpected sweep CSV header");
            header = false;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != sweep_columns().size()) throw ConfigError(path.string() + ": malformed sweep row");
        auto num = [&](std::size_t i) {
            char* end = nullptr;
            const double v = std::strtod(f[i].c_str(), &end);
            if (end == f[i].c_str() || *end) throw ConfigError(path.string() + ": bad number in column " + sweep_columns()[i]);
            return v;
        };
        auto count = [&](std::size_t i) { return static_cast<std::uint64_t>(std::stoull(f[i])); };
        StoredCell s;
        s.replicate = std::stoi(f[0]);
        SweepCell& c = s.cell;
        c.eps_index = count(1);
        c.lambda_index = count(2);
        c.horizon = std::stoi(f[3]);
        c.epsilon = num(4);
        c.lambda = num(5);
        c.kind = kind_from_string(f[6]);
        c.x_star = num(7);
        c.c_star = num(8);
        c.est.n = count(9);
        c.est.failures = count(10);
        c.est.p_hat = num(11);
        c.est.ci = num(12);
        c.est.wilson_lo = num(13);
        c.est.wilson_hi = num(14);
        c.est.payoff_mean = num(15);
        c.est.payoff_ci = num(16);
        out.push_back(s);
    }
    return out;
}

// Manifest ----------------------------------------------------------------

struct OutputFile {
    std::string file;
    std::string fnv1a64;
};

struct RunManifest {
    std::string tool_version = opacity::tool_version();
    std::string subcommand;
    std::vector<std::string> args;
    std::string config_path;  ///< empty when the config came from a preset
    std::string preset;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::string out_dir;
    std::string status = "incomplete";
    Json config;
    std::vector<OutputFile> outputs;
};

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Json to_json(const RunManifest& m) {
    Json j;
    j["manifest_version"] = 1;
    j["tool_version"] = m.tool_version;
    j["subcommand"] = m.subcommand;
    j["args"] = m.args;
    j["config_path"] = m.config_path;
    j["preset"] = m.preset;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["timestamp"] = m.timestamp;
    j["out_dir"] = m.out_dir;
    j["status"] = m.status;
    j["config"] = m.config;
    j["outputs"] = Json::array();
    for (const auto& o : m.outputs) j["outputs"].push_back({{"file", o.file}, {"fnv1a64", o.fnv1a64}});
    return j;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << to_json(m).dump(2) << '\n';
}

/// Loads a manifest and checks that its embedded config still hashes to the
/// stored value.
inline RunManifest load_manifest(const std::filesystem::path& path) {
    const Json j = parse_json_text(read_file(path.string()), path.string());
    RunManifest m;
    try {
        m.tool_version = j.at("tool_version").get<std::string>();
        m.subcommand = j.at("subcommand").get<std::string>();
        m.args = j.at("args").get<std::vector<std::string>>();
        m.config_path = j.at("config_path").get<std::string>();
        m.preset = j.at("preset").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.timestamp = j.at("timestamp").get<std::string>();
        m.out_dir = j.at("out_dir").get<std::string>();
        m.status = j.at("status").get<std::string>();
        m.config = j.at("config");
        for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("file"), o.at("fnv1a64")});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": malformed manifest: " + e.what());
    }
    const RunConfig cfg = config_from_json(m.config);
    if (hex64(config_hash(cfg)) != m.config_hash) throw ConfigError(path.string() + ": config hash mismatch");
    return m;
}

}  // namespace opacity
