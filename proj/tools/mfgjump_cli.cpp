// Command-line driver: solve, refine, simulate, best-response.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfgjump/continuous_limit.hpp"
#include "mfgjump/equilibrium.hpp"
#include "mfgjump/io/config.hpp"
#include "mfgjump/io/output.hpp"
#include "mfgjump/nplayer.hpp"

namespace fs = std::filesystem;
using namespace mfgjump;

namespace {

enum Exit : int { ok = 0, failure = 1, bad_config = 2, not_converged = 3, missing_artifact = 4 };

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int n_min = 0;
    int n_max = 3;
    std::string from;
    bool zero_policy = false;
    std::string eta;
    std::string policy;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Options& o) {
    ExperimentConfig cfg;
    if (!o.config.empty()) {
        cfg = load_config(o.config);
    } else if (!o.from.empty() && fs::exists(fs::path(o.from) / "manifest.json")) {
        cfg = load_config((fs::path(o.from) / "manifest.json").string());
    }
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.simulation.seed = *o.seed;
    return cfg;
}

TelemetryHook progress(const Options& o) {
    if (o.quiet) return {};
    return [](const IterationTelemetry& t) {
        if (t.iteration % 10 == 0)
            std::fprintf(stderr, "iter %zu  residual %.3e  eta in [%.6e, %.6e]  damping %.6f\n", t.iteration,
                         t.residual, t.eta_min, t.eta_max, t.damping);
    };
}

nlohmann::json equilibrium_summary(const EquilibriumResult& res) {
    return {{"converged", res.converged},
            {"iterations", res.iterations},
            {"final_residual", res.residual_trace.empty() ? 0.0 : res.residual_trace.back()},
            {"consistency_residual", res.consistency_residual},
            {"residual_bound", res.residual_bound},
            {"final_damping", res.final_damping},
            {"positive_flow", res.positive_flow},
            {"eta_min", res.eta.min()},
            {"eta_max", res.eta.max()},
            {"clamped_mass", res.flow.clamped_mass}};
}

int run_solve(const Options& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const CryptoGame game = make_game(cfg.game);
    const EquilibriumResult res = solve(game, cfg.solver, progress(o));
    ArtifactDir dir(cfg.output_dir);
    write_equilibrium(dir, game, res);
    write_manifest(dir, cfg, "solve", equilibrium_summary(res));
    std::printf("%s after %zu iterations; consistency residual %.3e; min eta %.6e\n",
                res.converged ? "converged" : "NOT converged", res.iterations, res.consistency_residual,
                res.eta.min());
    if (!res.positive_flow) std::printf("note: equilibrium flow is not strictly positive\n");
    return res.converged ? ok : not_converged;
}

int run_refine(const Options& o) {
    if (o.n_min < 0 || o.n_max < o.n_min) throw ConfigError("refine: need 0 <= n-min <= n-max");
    const ExperimentConfig cfg = resolve_config(o);
    ArtifactDir dir(cfg.output_dir);
    std::vector<int> orders;
    for (int n = o.n_min; n <= o.n_max; ++n) orders.push_back(n);
    const auto study = refinement_study(cfg.game, cfg.solver, orders, true,
                                        [&](int n, const CryptoGame& game, const EquilibriumResult& res) {
                                            ArtifactDir sub(dir.path() / ("n" + std::to_string(n)));
                                            write_equilibrium(sub, game, res);
                                            ExperimentConfig c = cfg;
                                            c.game.order = n;
                                            write_manifest(sub, c, "solve", equilibrium_summary(res));
                                            std::fprintf(stderr, "n = %d: %s in %zu iterations\n", n,
                                                         res.converged ? "converged" : "not converged",
                                                         res.iterations);
                                        });
    CsvWriter csv({"n", "K", "L1_distance_to_next", "iterations", "wall_time_s"});
    nlohmann::json rows = nlohmann::json::array();
    bool all_converged = true;
    for (const auto& r : study.rows) {
        csv.row(r.n, r.steps, r.l1_to_next ? fmt(*r.l1_to_next) : std::string(), r.iterations, r.wall_time_s);
        rows.push_back({{"n", r.n}, {"converged", r.converged}, {"error", r.error}});
        all_converged = all_converged && r.converged && r.error.empty();
        std::printf("n=%d K=%zu L1_to_next=%s iterations=%zu %s\n", r.n, r.steps,
                    r.l1_to_next ? fmt(*r.l1_to_next).c_str() : "-", r.iterations,
                    r.error.empty() ? (r.converged ? "converged" : "NOT converged") : r.error.c_str());
    }
    dir.write("refinement_study.csv", csv);
    write_manifest(dir, cfg, "refine", {{"rows", rows}});
    return all_converged ? ok : not_converged;
}

struct LoadedEquilibrium {
    PolicyTable policy;
    HashRateFlow eta;
    std::optional<MassTable> mu;
};

LoadedEquilibrium load_equilibrium(const fs::path& dir, const CryptoGame& game) {
    for (const char* name : {"policy.csv", "eta_bar.csv"})
        if (!fs::exists(dir / name)) throw MissingArtifact("missing equilibrium artifact " + (dir / name).string());
    LoadedEquilibrium eq;
    eq.policy = read_table_csv<PolicyTag>(dir / "policy.csv", game.steps(), game.wealth.size(), "a_star");
    eq.eta = read_eta_csv(dir / "eta_bar.csv", game.steps());
    return eq;
}

int run_simulate(const Options& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const CryptoGame game = make_game(cfg.game);
    const std::size_t K = game.steps();

    LoadedEquilibrium eq;
    int status = ok;
    if (o.zero_policy) {
        eq.policy = PolicyTable(K, game.wealth.size(), 0.0);
        eq.eta = HashRateFlow::constant(K, 0.0);
    } else if (!o.from.empty()) {
        eq = load_equilibrium(o.from, game);
    } else {
        const EquilibriumResult res = solve(game, cfg.solver, progress(o));
        if (!res.converged) status = not_converged;
        eq.policy = res.policy;
        eq.eta = res.eta;
    }

    ArtifactDir dir(cfg.output_dir);
    const DistributionFlow flow = induced_distribution(game, eq.eta, eq.policy);

    // density = node mass / width of the node's dual cell
    const auto& g = game.wealth;
    std::vector<double> dual(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double left = i > 0 ? g[i] - g[i - 1] : 0.0;
        const double right = i + 1 < g.size() ? g[i + 1] - g[i] : 0.0;
        dual[i] = 0.5 * (left + right);
    }
    CsvWriter evolution({"t", "x", "density"});
    for (std::size_t k = 0; k <= K; ++k)
        for (std::size_t i = 0; i < g.size(); ++i) evolution.row(game.time.time(k), g[i], flow.mu(k, i) / dual[i]);
    dir.write("wealth_evolution.csv", evolution);

    CsvWriter surface({"t", "x", "a_star"});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < g.size(); ++i) surface.row(game.time.time(k), g[i], eq.policy(k, i));
    dir.write("control_surface.csv", surface);

    const Trajectory tr = simulate_population(game, eq.policy, eq.eta, cfg.simulation);
    const WealthStatistics st = wealth_statistics(tr, game.wealth, game.params.L);
    CsvWriter stats({"step", "t", "mean", "variance", "skewness", "gini", "dropout_fraction"});
    CsvWriter population({"step", "mean_wealth", "gini", "dropout_fraction", "empirical_control_mean", "eta_bar"});
    for (std::size_t k = 0; k <= K; ++k) {
        stats.row(k, game.time.time(k), st.mean[k], st.variance[k], st.skewness[k], st.gini[k], st.dropout[k]);
        population.row(k, st.mean[k], st.gini[k], st.dropout[k], k < K ? fmt(tr.control_mean[k]) : std::string(),
                       k < K ? fmt(eq.eta[k]) : std::string());
    }
    dir.write("stats.csv", stats);
    dir.write("population.csv", population);

    const nlohmann::json summary = {{"agents", tr.agents},
                                    {"mode", cfg.simulation.mode == InteractionMode::validation ? "validation"
                                                                                                : "empirical"},
                                    {"gini_start", st.gini.front()},
                                    {"gini_end", st.gini.back()},
                                    {"dropout_start", st.dropout.front()},
                                    {"dropout_end", st.dropout.back()},
                                    {"control_mean_l1", control_mean_l1(tr, game.time.dt())},
                                    {"zero_policy", o.zero_policy}};
    write_manifest(dir, cfg, "simulate", summary);
    std::printf("N=%zu  gini %.4f -> %.4f  dropout %.4f -> %.4f\n", tr.agents, st.gini.front(), st.gini.back(),
                st.dropout.front(), st.dropout.back());
    return status;
}

int run_best_response(const Options& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const CryptoGame game = make_game(cfg.game);
    const std::size_t K = game.steps();
    HashRateFlow eta = HashRateFlow::constant(K, cfg.solver.initial_constant);
    if (!o.eta.empty()) {
        if (!fs::exists(o.eta)) throw MissingArtifact("missing flow file " + o.eta);
        eta = read_eta_csv(o.eta, K);
    }
    const BackwardResult br = best_response(game, eta);
    ArtifactDir dir(cfg.output_dir);
    dir.write("eta_bar.csv", eta_csv(game, eta));
    dir.write("policy.csv", table_csv(game.wealth, br.policy, "a_star"));
    dir.write("value.csv", table_csv(game.wealth, br.values, "v"));
    nlohmann::json summary = nlohmann::json::object();
    if (!o.policy.empty()) {
        if (!fs::exists(o.policy)) throw MissingArtifact("missing policy file " + o.policy);
        const auto candidate = read_table_csv<PolicyTag>(o.policy, K, game.wealth.size(), "a_star");
        const double gap = best_response_value_gap(game, eta, candidate);
        summary["value_gap"] = gap;
        std::printf("best-response value gap %.6e\n", gap);
    }
    write_manifest(dir, cfg, "best-response", summary);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field game solver for the crypto mining model"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON); a run manifest also works");
        sub->add_option("--out", o.out, "output directory (overrides output.dir)");
        sub->add_option("--seed", o.seed, "master seed (overrides simulation.seed)");
        sub->add_flag("--quiet", o.quiet, "suppress per-iteration progress");
    };
    auto* solve_cmd = app.add_subcommand("solve", "compute the equilibrium and write its artifacts");
    common(solve_cmd);
    auto* refine_cmd = app.add_subcommand("refine", "solve over a range of time orders and compare flows");
    common(refine_cmd);
    refine_cmd->add_option("--n-min", o.n_min, "smallest time order")->capture_default_str();
    refine_cmd->add_option("--n-max", o.n_max, "largest time order")->capture_default_str();
    auto* sim_cmd = app.add_subcommand("simulate", "forward and N-player simulation under an equilibrium");
    common(sim_cmd);
    sim_cmd->add_option("--from", o.from, "directory with solve artifacts (otherwise solve inline)");
    sim_cmd->add_flag("--zero-policy", o.zero_policy, "use the all-zero policy and flow");
    auto* br_cmd = app.add_subcommand("best-response", "best response to a fixed flow");
    common(br_cmd);
    br_cmd->add_option("--eta", o.eta, "eta_bar.csv to respond to (default: constant solver.initial_constant)");
    br_cmd->add_option("--policy", o.policy, "policy.csv whose value gap to report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_config;
    }

    try {
        if (solve_cmd->parsed()) return run_solve(o);
        if (refine_cmd->parsed()) return run_refine(o);
        if (sim_cmd->parsed()) return run_simulate(o);
        if (br_cmd->parsed()) return run_best_response(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bad_config;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return missing_artifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return failure;
}
