// opacity_lab: command-line driver for posterior checks, equilibrium solving,
// survival DP and Monte Carlo sweeps.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "opacity/opacity.hpp"

namespace fs = std::filesystem;
using namespace opacity;

namespace {

struct CommonFlags {
    std::string config;
    std::string preset;
    std::string manifest;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_samples;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--preset", f.preset, "named configuration");
    sub->add_option("--manifest", f.manifest, "rerun the config and seed recorded in a manifest");
    sub->add_option("--out", f.out, "output directory (else $OPACITY_OUT_DIR, else ./opacity_out/<subcommand>)");
    sub->add_option("--seed", f.seed, "base seed");
    sub->add_option("--n-samples", f.n_samples, "Monte Carlo sample size per cell");
    sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

/// Loads the configuration, applies flag overrides, and opens the run manifest.
class Run {
public:
    Run(std::string subcommand, const CommonFlags& f, std::vector<std::string> args) : flags_(f) {
        const int sources = !f.config.empty() + !f.preset.empty() + !f.manifest.empty();
        if (sources > 1) throw ConfigError("use only one of --config, --preset, --manifest");
        manifest_.subcommand = std::move(subcommand);
        manifest_.args = std::move(args);
        if (!f.config.empty()) {
            cfg_ = load_config(f.config);
            manifest_.config_path = f.config;
        } else if (!f.preset.empty()) {
            cfg_ = preset(f.preset);
            manifest_.preset = f.preset;
        } else if (!f.manifest.empty()) {
            const RunManifest m = load_manifest(f.manifest);
            if (m.subcommand != manifest_.subcommand)
                throw ConfigError(f.manifest + ": manifest records subcommand '" + m.subcommand + "'");
            cfg_ = config_from_json(m.config);
            manifest_.config_path = m.config_path;
            manifest_.preset = m.preset;
        }
        if (f.seed) cfg_.seed = *f.seed;
        cfg_.sweep.grid.seed = cfg_.seed;
        if (f.n_samples) {
            cfg_.garbling.n_samples = *f.n_samples;
            cfg_.sweep.grid.n_samples = *f.n_samples;
            if (cfg_.sweep.choice) cfg_.sweep.choice->n_samples = *f.n_samples;
        }
    }

    RunConfig& config() { return cfg_; }
    unsigned threads() const { return flags_.threads; }

    /// Validates the final config and creates the output directory.
    void begin() {
        validate(cfg_);
        if (!flags_.out.empty()) dir_ = flags_.out;
        else if (const char* env = std::getenv("OPACITY_OUT_DIR"); env && *env) dir_ = env;
        else dir_ = fs::path("opacity_out") / manifest_.subcommand;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory " + dir_.string() + ": " + ec.message());
        if (fs::exists(dir_ / "manifest.json")) {
            try {
                previous_ = load_manifest(dir_ / "manifest.json");
            } catch (const ConfigError&) {
                previous_.reset();
            }
        }
        manifest_.config = to_json(cfg_);
        manifest_.config_hash = hex64(config_hash(cfg_));
        manifest_.seed = cfg_.seed;
        manifest_.timestamp = utc_timestamp();
        manifest_.out_dir = dir_.string();
        manifest_.status = "incomplete";
        write_manifest(dir_ / "manifest.json", manifest_);
    }

    const fs::path& dir() const { return dir_; }

    /// Manifest found in the output directory before this run replaced it.
    const std::optional<RunManifest>& previous() const { return previous_; }

    void save(const std::string& name, const CsvWriter& w) {
        w.save(dir_ / name);
        record(name);
    }

    void save(const std::string& name, const Json& j) {
        std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + (dir_ / name).string());
        f << j.dump(2) << '\n';
        f.close();
        record(name);
    }

    void record(const std::string& name) {
        manifest_.outputs.erase(std::remove_if(manifest_.outputs.begin(), manifest_.outputs.end(),
                                               [&](const OutputFile& o) { return o.file == name; }),
                                manifest_.outputs.end());
        manifest_.outputs.push_back({name, hex64(file_hash(dir_ / name))});
    }

    void finish(bool complete = true) {
        manifest_.status = complete ? "complete" : "incomplete";
        write_manifest(dir_ / "manifest.json", manifest_);
        std::cout << "outputs in " << dir_.string() << " (manifest.json, status " << manifest_.status << ")\n";
    }

    const std::string& config_hash_hex() const { return manifest_.config_hash; }

private:
    CommonFlags flags_;
    RunConfig cfg_;
    RunManifest manifest_;
    std::optional<RunManifest> previous_;
    fs::path dir_;
};

std::vector<double> parse_number_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || end == item.c_str() || *end || !std::isfinite(v))
            throw ConfigError(field + ": cannot parse '" + text + "' as a comma-separated list of numbers");
        out.push_back(v);
    }
    if (out.empty() || text.back() == ',') throw ConfigError(field + ": cannot parse '" + text + "' as a comma-separated list of numbers");
    return out;
}

Json interval_json(double value, double tol, bool pass) { return {{"value", value}, {"tol", tol}, {"pass", pass}}; }

// verify-garbling --------------------------------------------------------

struct GarblingFlags {
    std::optional<double> q;
    std::optional<double> eps;
    std::string lambdas;
    std::optional<std::size_t> n;
    bool dump_samples = false;
};

int cmd_verify_garbling(Run& run, const GarblingFlags& gf) {
    auto& g = run.config().garbling;
    if (gf.q) g.q = *gf.q;
    if (gf.eps) g.epsilon = *gf.eps;
    if (!gf.lambdas.empty()) g.lambdas = parse_number_list(gf.lambdas, "lambda");
    if (gf.n) g.n_samples = *gf.n;
    run.begin();
    const auto& cfg = run.config();
    const ObservationChannel base = cfg.channel.with_epsilon(g.epsilon);
    const auto battery = ConvexTestBattery::standard(g.q);

    std::vector<PosteriorSample> samples;
    for (std::size_t k = 0; k < g.lambdas.size(); ++k)
        samples.push_back(sample_posteriors(g.q, base.with_lambda(g.lambdas[k]), g.n_samples,
                                            derive_seed(cfg.seed, {0, k}), Conditioning::unconditional, run.threads()));

    bool ok = true;
    Json summary;
    summary["q"] = g.q;
    summary["epsilon"] = g.epsilon;
    summary["n_samples"] = g.n_samples;

    CsvWriter mart({"lambda", "mean", "standard_error", "deviation", "pass"});
    CsvWriter quant({"lambda", "quantile", "posterior"});
    CsvWriter mlrp({"lambda", "points", "violations", "worst_drop", "pass"});
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const RunningStats st = summarize(samples[k].draws);
        const double dev = std::abs(st.mean() - g.q);
        const bool pass = dev <= 4.0 * st.standard_error();
        ok = ok && pass;
        mart.row(g.lambdas[k], st.mean(), st.standard_error(), dev, pass);
        std::vector<double> sorted = samples[k].draws;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i <= 100; ++i) {
            const auto idx = static_cast<std::size_t>(std::floor(i / 100.0 * static_cast<double>(sorted.size() - 1)));
            quant.row(g.lambdas[k], i / 100.0, sorted[idx]);
        }
        const double s = samples[k].channel.signal_sd();
        const MlrpReport mr = check_mlrp(g.q, samples[k].channel, 0.5 - (1.0 + 6.0 * s), 0.5 + (1.0 + 6.0 * s));
        ok = ok && mr.pass();
        mlrp.row(g.lambdas[k], mr.points, mr.violations, mr.worst_drop, mr.pass());
    }

    CsvWriter order({"lambda_fine", "lambda_coarse", "test", "mean_fine", "mean_coarse", "tol", "pass"});
    CsvWriter comp({"lambda_from", "lambda_to", "ks_distance", "ks_threshold", "pass"});
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const auto rep = verify_convex_order(samples[i], samples[j], battery);
            order.row(g.lambdas[i], g.lambdas[j], std::string("mean"), rep.mean_fine, rep.mean_coarse, rep.mean_tol,
                      rep.mean_pass);
            for (const auto& e : rep.entries)
                order.row(g.lambdas[i], g.lambdas[j], e.name, e.mean_fine, e.mean_coarse, e.tol, e.pass);
            ok = ok && rep.all_pass();
            const auto chained = sample_garbled_posteriors(g.q, base, {g.lambdas[i], g.lambdas[j]}, g.n_samples,
                                                           derive_seed(cfg.seed, {1, i, j}), Conditioning::unconditional,
                                                           run.threads());
            const double d = ks_distance(chained.draws, samples[j].draws);
            const double thr = ks_threshold(chained.draws.size(), samples[j].draws.size());
            ok = ok && d <= thr;
            comp.row(g.lambdas[i], g.lambdas[j], d, thr, d <= thr);
        }

    run.save("martingale.csv", mart);
    run.save("posterior_quantiles.csv", quant);
    run.save("mlrp.csv", mlrp);
    run.save("convex_order.csv", order);
    run.save("composition.csv", comp);
    if (gf.dump_samples) {
        CsvWriter dump({"lambda", "theta", "signal", "posterior"});
        for (std::size_t k = 0; k < samples.size(); ++k)
            for (std::size_t i = 0; i < samples[k].draws.size(); ++i)
                dump.row(g.lambdas[k], static_cast<int>(samples[k].thetas[i]), samples[k].signals[i], samples[k].draws[i]);
        run.save("posteriors.csv", dump);
    }
    summary["pass"] = ok;
    run.save("summary.json", summary);
    run.finish();
    std::cout << "verify-garbling: " << (ok ? "pass" : "FAIL") << " (" << g.lambdas.size() << " channels, n = "
              << g.n_samples << ")\n";
    return ok ? 0 : 4;
}

// solve --------------------------------------------------------------------

int cmd_solve(Run& run, std::optional<double> eps, std::optional<double> lambda) {
    auto& cfg = run.config();
    if (eps) cfg.channel.epsilon = *eps;
    if (lambda) cfg.channel.lambda = *lambda;
    run.begin();
    const ThresholdEquilibrium eq = solve_threshold(cfg.game, cfg.channel, cfg.solver.options());
    const double s = eq.signal_sd();

    CsvWriter eqw({"epsilon", "lambda", "signal_sd", "kind", "x_star", "c_star", "residual", "bracket_lo",
                   "bracket_hi", "fail_theta0", "fail_theta1", "fail_prior", "horizon", "fail_by_horizon"});
    eqw.row(cfg.channel.epsilon, cfg.channel.lambda, s, std::string(to_string(eq.kind)), eq.x_star, eq.c_star,
            eq.residual, eq.bracket_lo, eq.bracket_hi, one_step_failure_prob(eq, 0), one_step_failure_prob(eq, 1),
            one_step_failure_prob_prior(eq), cfg.game.horizon_T, failure_prob_closed_form(eq, cfg.game.horizon_T));
    run.save("equilibrium.csv", eqw);

    const HazardProfile hp = hazard_profile(eq, uniform_grid(0.0, 1.0, 1001));
    CsvWriter hz({"belief", "hazard", "withdraw"});
    for (std::size_t i = 0; i < hp.beliefs.size(); ++i) hz.row(hp.beliefs[i], hp.hazard[i], hp.withdraw[i]);
    run.save("hazard.csv", hz);

    const ResidualScan sc = scan_residual(cfg.game, cfg.channel, eq.bracket_lo, eq.bracket_hi, 1001);
    CsvWriter rs({"x", "residual"});
    for (std::size_t i = 0; i < sc.x.size(); ++i) rs.row(sc.x[i], sc.r[i]);
    run.save("residual.csv", rs);

    Json summary{{"kind", to_string(eq.kind)}, {"signal_sd", s}, {"c_star", eq.c_star}};
    summary["x_star"] = std::isfinite(eq.x_star) ? Json(eq.x_star) : Json(format_double(eq.x_star));
    std::string note;
    if (cfg.game.w == 0.0) note = "w = 0: continuing is weakly dominant, so the all_continue corner is selected";
    else if (eq.kind == EquilibriumKind::all_continue) note = "no interior cutoff within the capped bracket; residual >= 0 at its lower end";
    else if (eq.kind == EquilibriumKind::all_withdraw) note = "residual < 0 on the whole capped bracket";
    summary["note"] = note;
    if (hp.trigger) {
        const auto& t = *hp.trigger;
        summary["trigger"] = {{"belief", t.b_dagger},     {"gap", t.gap},     {"left_slope", t.left_slope},
                              {"right_slope", t.right_slope}, {"kappa", t.kappa}};
    } else {
        summary["trigger"] = nullptr;
    }
    run.save("summary.json", summary);
    run.finish();

    std::cout << "solve: " << to_string(eq.kind) << " equilibrium";
    if (eq.kind == EquilibriumKind::interior) std::cout << ", x* = " << format_double(eq.x_star) << ", c* = " << eq.c_star;
    std::cout << '\n';
    if (hp.trigger) std::cout << "trigger at belief " << hp.trigger->b_dagger << ", hazard gap " << hp.trigger->gap << '\n';
    if (!note.empty()) std::cout << "note: " << note << '\n';
    return 0;
}

// dp -------------------------------------------------------------------------

int cmd_dp(Run& run, std::optional<int> horizon) {
    auto& cfg = run.config();
    if (horizon) cfg.dp.horizons = {*horizon};
    for (int T : cfg.dp.horizons)
        if (T < 1) throw ConfigError("horizon must be >= 1");
    run.begin();
    const auto& opt = cfg.dp.options;
    const ActionRule rule = ActionRule::from(cfg.policy);
    std::vector<int> hs = cfg.dp.horizons;
    std::sort(hs.begin(), hs.end());
    hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
    const int Tmax = hs.back();
    const DpResult res = survival_value_dp(cfg.extraction, cfg.policy, Tmax, opt);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';

    const double b = cfg.policy.b_dagger, win = cfg.dp.window;
    const bool fixed_rule = opt.discrete_rule.has_value();
    const double rec_limit = fixed_rule ? 1e-12 : 10.0 * kQuadTol;
    bool ok = true;

    CsvWriter surv({"horizon", "belief", "value"});
    CsvWriter env({"horizon", "belief", "value", "envelope"});
    CsvWriter conc({"horizon", "b_dagger", "window_lo", "window_hi", "pairs", "violations", "worst_gap", "left_slope",
                    "right_slope", "kink", "direction", "max_halfwidth", "widest_window", "jensen_gap_straddle"});
    CsvWriter rec({"horizon", "residual", "limit", "pass"});
    for (int T : hs) {
        const SurvivalCurve& c = res.at(T);
        for (std::size_t i = 0; i < c.grid.size(); ++i) surv.row(T, c.grid[i], c.values[i]);
        const Concavification cv = concavify(c);
        for (std::size_t i = 0; i < c.grid.size(); ++i) env.row(T, c.grid[i], c.values[i], cv.envelope.values[i]);
        const ConcavityReport cr = concavity_probe(c, b, win, cfg.dp.concavity_tol);
        const double jg = jensen_gap(c, b, {b - win, b + win}, {0.5, 0.5});
        conc.row(T, b, cr.b_lo, cr.b_hi, cr.pairs_checked, cr.violations, cr.worst_gap, cr.left_slope, cr.right_slope,
                 cr.kink, cr.direction, max_concave_halfwidth(c, b, 1e-12),
                 widest_concave_window(c, b, cfg.dp.concavity_tol), jg);
        ok = ok && cr.concave();
        const SurvivalCurve prev = T > 1 ? res.at(T - 1) : SurvivalCurve{c.grid, std::vector<double>(c.grid.size(), 1.0), 0};
        const double r = recursion_check(c, prev, cfg.extraction, rule, opt);
        rec.row(T, r, rec_limit, r <= rec_limit);
        ok = ok && r <= rec_limit;
    }
    Json summary{{"horizons", hs}, {"grid_points", opt.grid_points}, {"b_dagger", b}, {"window", win}};
    summary["filter"] = {{"p_prior", res.filter.p_prior}, {"p_post", res.filter.p_post},
                         {"spread", res.filter.spread}, {"surv_sd", res.filter.surv_sd}};
    if (!fixed_rule) {
        const double conv = quadrature_convergence(cfg.extraction, rule, Tmax, opt);
        summary["quadrature_convergence"] = interval_json(conv, kQuadTol, conv < kQuadTol);
        ok = ok && conv < kQuadTol;
    } else {
        summary["quadrature_convergence"] = nullptr;
    }
    summary["warnings"] = res.warnings;
    summary["pass"] = ok;
    run.save("survival.csv", surv);
    run.save("envelope.csv", env);
    run.save("concavity.csv", conc);
    run.save("recursion.csv", rec);
    run.save("summary.json", summary);
    run.finish();
    std::cout << "dp: horizons";
    for (int T : hs) std::cout << ' ' << T;
    std::cout << ", V_" << Tmax << "(" << b << ") = " << interp_sorted(res.at(Tmax).grid, res.at(Tmax).values, b)
              << ", checks " << (ok ? "pass" : "FAIL") << '\n';
    return ok ? 0 : 4;
}

// sweep ----------------------------------------------------------------------

int cmd_sweep(Run& run, std::optional<std::size_t> max_cells) {
    run.begin();
    const RunConfig& cfg = run.config();
    const fs::path csv_path = run.dir() / "sweep.csv";

    // Resume only from an unfinished run of the identical config.
    std::vector<StoredCell> carried;
    if (const auto& prev = run.previous();
        prev && prev->status == "incomplete" && prev->subcommand == "sweep" && prev->config_hash == run.config_hash_hex())
        carried = read_sweep_csv(csv_path);
    if (!carried.empty()) std::cout << "resuming: " << carried.size() << " cells carried over\n";

    const bool has_grid = !cfg.sweep.grid.lambda_grid.empty();
    bool complete = true;
    std::vector<SweepResult> results;
    if (has_grid) {
        std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
        out << sweep_header();
        for (const auto& s : carried) out << sweep_row(s.replicate, s.cell);
        out.flush();
        std::size_t budget = max_cells.value_or(static_cast<std::size_t>(-1));
        for (int r = 0; r < cfg.sweep.replicates; ++r) {
            SweepGrid grid = cfg.sweep.grid;
            grid.seed = replicate_seed(cfg.seed, r);
            SweepRunOptions opt;
            opt.threads = run.threads();
            for (const auto& s : carried)
                if (s.replicate == r) opt.completed.push_back(s.cell);
            std::size_t fresh = 0;
            opt.max_cells = budget;
            opt.on_cell = [&](const SweepCell& c) {
                out << sweep_row(r, c);
                out.flush();
                ++fresh;
            };
            results.push_back(run_sweep(cfg.game, cfg.channel, grid, opt));
            budget -= std::min(budget, fresh);
            if (!results.back().complete) {
                complete = false;
                break;
            }
        }
        out.close();
        run.record("sweep.csv");
    }

    if (!complete) {
        run.finish(false);
        std::cout << "sweep: stopped after --max-cells; rerun with the same config and --out to resume\n";
        return 0;
    }

    Json summary;
    summary["replicates"] = cfg.sweep.replicates;
    if (has_grid) {
        CsvWriter verdicts({"replicate", "lambda", "horizon", "p_hat_final", "ci_final", "vanishing", "tail_decay",
                            "bounded_away", "classification"});
        CsvWriter mono({"replicate", "horizon", "epsilon", "lambda_lo", "lambda_hi", "survival_lo", "survival_hi",
                        "excess"});
        const bool can_mono = cfg.sweep.grid.lambda_grid.size() >= 3;
        const bool can_classify = cfg.sweep.grid.epsilon_ladder.size() >= 4;
        Json reps = Json::array();
        for (int r = 0; r < static_cast<int>(results.size()); ++r) {
            const SweepResult& sr = results[r];
            Json rj;
            rj["seed"] = replicate_seed(cfg.seed, r);
            Json vj = Json::array();
            if (can_classify)
                for (std::size_t li = 0; li < sr.grid.lambda_grid.size(); ++li) {
                    const ViabilityVerdict v = classify_limit_viability(sr, li);
                    for (const auto& t : v.trends)
                        verdicts.row(r, v.lambda, t.horizon, t.p_hat.back(), t.ci.back(), t.vanishing, t.tail_decay,
                                     t.bounded_away, std::string(to_string(v.classification)));
                    vj.push_back({{"lambda", v.lambda}, {"classification", to_string(v.classification)}});
                    std::cout << "replicate " << r << " lambda " << v.lambda << ": " << to_string(v.classification) << '\n';
                }
            rj["verdicts"] = vj;
            if (can_mono) {
                Json mj = Json::array();
                for (int T : sr.grid.horizons) {
                    const MonotonicityReport m = opacity_monotonicity_check(sr, T);
                    for (const auto& v : m.violations)
                        mono.row(r, T, v.epsilon, v.lambda_lo, v.lambda_hi, v.survival_lo, v.survival_hi, v.excess);
                    mj.push_back({{"horizon", T}, {"pairs", m.pairs_checked}, {"violations", m.violations.size()}});
                    std::cout << "replicate " << r << " T=" << T << ": survival monotone in lambda "
                              << (m.pass() ? "yes" : "no") << " (" << m.violations.size() << " of " << m.pairs_checked
                              << " pairs violate)\n";
                }
                rj["monotonicity"] = mj;
            }
            reps.push_back(rj);
        }
        if (can_classify) run.save("verdicts.csv", verdicts);
        if (can_mono) run.save("monotonicity.csv", mono);
        summary["sweeps"] = reps;
    }
    if (cfg.sweep.choice) {
        const auto& ch = *cfg.sweep.choice;
        const ExtendedGameOutcome oc = choose_opacity(cfg.game, cfg.channel.with_epsilon(ch.epsilon), ch.lambda_grid,
                                                      ch.horizon, ch.n_samples, choice_seed(cfg.seed),
                                                      run.threads());
        CsvWriter w({"lambda", "kind", "x_star", "payoff", "payoff_ci", "failure", "in_tie_set", "chosen"});
        for (const auto& e : oc.entries) {
            const bool tie = std::find(oc.tie_set.begin(), oc.tie_set.end(), e.lambda) != oc.tie_set.end();
            w.row(e.lambda, std::string(to_string(e.kind)), e.x_star, e.payoff, e.payoff_ci, e.failure, tie,
                  e.lambda == oc.lambda_star);
        }
        run.save("opacity_choice.csv", w);
        summary["choice"] = {{"lambda_star", oc.lambda_star},       {"tie_set", oc.tie_set},
                             {"statistically_tied", oc.tied},        {"above_min", oc.above_min},
                             {"separation", oc.separation},          {"separation_threshold", oc.separation_ci},
                             {"separated", oc.separated()}};
        std::cout << "opacity choice: lambda* = " << oc.lambda_star << (oc.tied ? " (statistically tied set of " : " (")
                  << oc.tie_set.size() << (oc.tied ? ")" : " candidate)") << ", lambda* > lambda_min: "
                  << (oc.above_min ? "true" : "false") << ", separation " << oc.separation << " vs 3 CI "
                  << oc.separation_ci << '\n';
    }
    run.save("summary.json", summary);
    run.finish();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"opacity_lab: information opacity and survival experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version()));

    CommonFlags cg, cs, cd, cw;
    GarblingFlags gf;
    auto* g = app.add_subcommand("verify-garbling", "posterior martingale, convex order and garbling composition");
    add_common(g, cg);
    g->add_option("--q", gf.q, "prior Pr(theta = 1)");
    g->add_option("--eps", gf.eps, "noise scale epsilon");
    g->add_option("--lambda", gf.lambdas, "comma-separated increasing opacity levels");
    g->add_option("--n", gf.n, "posterior draws per channel");
    g->add_flag("--dump-samples", gf.dump_samples, "also write every draw to posteriors.csv");

    std::optional<double> s_eps, s_lambda;
    auto* s = app.add_subcommand("solve", "cutoff equilibrium and hazard profile");
    add_common(s, cs);
    s->add_option("--eps", s_eps, "noise scale epsilon");
    s->add_option("--lambda", s_lambda, "opacity level");

    std::optional<int> d_T;
    auto* d = app.add_subcommand("dp", "survival value DP, concavity and concavification");
    add_common(d, cd);
    d->add_option("--horizon", d_T, "single horizon instead of the configured list");

    std::optional<std::size_t> max_cells;
    auto* w = app.add_subcommand("sweep", "Monte Carlo sweep, viability verdicts and opacity choice");
    add_common(w, cw);
    w->add_option("--max-cells", max_cells, "stop after this many new cells (resumable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    const std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (g->parsed()) {
            Run run("verify-garbling", cg, args);
            return cmd_verify_garbling(run, gf);
        }
        if (s->parsed()) {
            Run run("solve", cs, args);
            return cmd_solve(run, s_eps, s_lambda);
        }
        if (d->parsed()) {
            Run run("dp", cd, args);
            return cmd_dp(run, d_T);
        }
        Run run("sweep", cw, args);
        return cmd_sweep(run, max_cells);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
