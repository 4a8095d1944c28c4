#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "mfgjump/io/config.hpp"
#include "mfgjump/io/output.hpp"
#include "oracles.hpp"

using namespace mfgjump;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("mfgjump_test_io_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Fmt, RoundTripsDoubles) {
    oracle::Gen gen(2);
    for (int i = 0; i < 1000; ++i) {
        const double v = gen.uniform(-1e3, 1e3) * std::pow(10.0, gen.uniform(-20, 20));
        ASSERT_EQ(std::stod(fmt(v)), v);
    }
}

TEST(Config, DefaultsParseFromEmptyObject) {
    const auto cfg = parse_config(json::object());
    EXPECT_EQ(cfg.game.params.M, 1000.0);
    EXPECT_EQ(cfg.game.horizon, 300);
    EXPECT_EQ(cfg.game.order, 1);
    EXPECT_EQ(cfg.solver.damping, 0.9);
    EXPECT_EQ(cfg.simulation.agents, 1000u);
    EXPECT_FALSE(cfg.solver.adaptive_damping);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config(json{{"modle", json::object()}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"model", {{"cost", 1.0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"model", {{"M", "big"}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"model", {{"M", -1.0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"solver", {{"damping", 1.0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"utility", {{"kind", "log"}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"time", {{"T", 0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"simulation", {{"agents", 0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json::array()), ConfigError);
}

TEST(ConfigProperty, JsonRoundTrip) {
    oracle::Gen gen(6);
    for (int trial = 0; trial < 50; ++trial) {
        ExperimentConfig cfg;
        cfg.game.params.c = gen.uniform(0.1, 3.0);
        cfg.game.params.r = gen.uniform(0.1, 3.0);
        cfg.game.params.M = gen.uniform(1.0, 2000.0);
        cfg.game.params.eps = gen.uniform(0.0, 0.1);
        cfg.game.horizon = static_cast<int>(gen.index(1, 400));
        cfg.game.order = static_cast<int>(gen.index(0, 4));
        cfg.game.wealth_nodes = gen.index(2, 1024);
        cfg.game.graded = trial % 2 == 0;
        if (trial % 3 == 0) {
            cfg.game.x_min = -gen.uniform(1.0, 50.0);
            cfg.game.x_max = gen.uniform(1.0, 50.0);
        }
        if (trial % 4 == 1) cfg.game.utility = UtilitySpec::crra(gen.uniform(0.1, 0.9));
        if (trial % 4 == 2) cfg.game.utility = UtilitySpec::table({-1.0, 0.0, 3.0}, {0.0, 1.0, 2.0});
        cfg.game.optimizer.refine = static_cast<OptimizerConfig::Refine>(gen.index(0, 2));
        cfg.solver.damping = gen.uniform(0.0, 0.99);
        cfg.solver.tol = gen.uniform(1e-12, 1e-6);
        cfg.solver.adaptive_damping = trial % 2 == 1;
        cfg.solver.scheme = trial % 5 == 0 ? Scheme::measure : Scheme::mean;
        if (trial % 7 == 0) cfg.solver.eps_schedule = {0.5, 0.1, 0.0};
        if (trial % 6 == 0) cfg.solver.initial_flow = HashRateFlow({0.1, 0.25});
        cfg.simulation.agents = gen.index(1, 100000);
        cfg.simulation.seed = gen.engine()();
        cfg.simulation.mode = trial % 2 ? InteractionMode::empirical : InteractionMode::validation;
        cfg.game.initial.mean = gen.uniform(0.0, 20.0);
        if (trial % 3 == 2) cfg.game.initial.truncate_below.reset();
        cfg.output_dir = "out/t" + std::to_string(trial);

        const json j = to_json(cfg);
        const ExperimentConfig back = parse_config(j);
        ASSERT_EQ(to_json(back), j);
        ASSERT_EQ(back.simulation.seed, cfg.simulation.seed);
        ASSERT_EQ(back.game.params.M, cfg.game.params.M);
        ASSERT_EQ(back.solver.initial_flow, cfg.solver.initial_flow);
        ASSERT_EQ(back.game.x_min, cfg.game.x_min);
        // a manifest wrapping this config parses to the same thing
        const json manifest{{"command", "solve"}, {"config", j}, {"artifacts", json::object()}};
        ASSERT_EQ(to_json(parse_config(manifest)), j);
    }
}

TEST(Config, ShippedConfigsLoad) {
    for (const char* name : {"paper-crypto.cfg", "paper-crypto-adaptive.cfg", "constant-utility.cfg", "small.cfg"}) {
        const auto path = std::string(MFGJUMP_SOURCE_DIR) + "/configs/" + name;
        EXPECT_NO_THROW({
            const auto cfg = load_config(path);
            EXPECT_EQ(*cfg.source, path);
        }) << name;
    }
    EXPECT_THROW(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST(Config, CommentsAllowedAndSyntaxErrorsReported) {
    const auto dir = scratch_dir("comments");
    std::filesystem::create_directories(dir);
    ArtifactDir out(dir);
    out.write("a.cfg", "// comment\n{ \"time\": { \"T\": 7 } /* trailing */ }\n");
    EXPECT_EQ(load_config((dir / "a.cfg").string()).game.horizon, 7);
    out.write("b.cfg", "{ \"time\": ");
    EXPECT_THROW(load_config((dir / "b.cfg").string()), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Csv, WriterAndReaderAgree) {
    CsvWriter csv({"k", "x", "v", "label"});
    csv.row(std::size_t{0}, 0.1, 1.0 / 3.0, std::string("a"));
    csv.row(1, -2.5, 1e-300, std::string("b"));
    EXPECT_EQ(csv.str().substr(0, 12), "k,x,v,label\n");
    const auto dir = scratch_dir("csv");
    ArtifactDir out(dir);
    CsvWriter numeric({"k", "x", "mass"});
    numeric.row(std::size_t{0}, 0.5, 1.0 / 3.0);
    numeric.row(std::size_t{1}, 1.5, 2.0 / 3.0);
    out.write("t.csv", numeric);
    const CsvTable t = read_csv(dir / "t.csv");
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][t.column("mass")], 1.0 / 3.0);
    EXPECT_EQ(t.rows[1][t.column("x")], 1.5);
    EXPECT_THROW(t.column("nope"), std::runtime_error);

    const json arts = out.artifacts();
    ASSERT_TRUE(arts.contains("t.csv"));
    EXPECT_EQ(arts["t.csv"]["bytes"], numeric.str().size());
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(dir / "t.csv"))));
    EXPECT_EQ(arts["t.csv"]["fnv1a64"], hex);
    std::filesystem::remove_all(dir);
}

TEST(Artifacts, EquilibriumTablesRoundTrip) {
    GameSpec spec;
    spec.params.M = 3.0;
    spec.horizon = 2;
    spec.wealth_nodes = 40;
    spec.action_nodes = 12;
    spec.clamp_threshold = INFINITY;
    const CryptoGame g = make_game(spec);
    const EquilibriumResult res = solve(g, SolverConfig{});
    const auto dir = scratch_dir("eq");
    ArtifactDir out(dir);
    write_equilibrium(out, g, res);
    ExperimentConfig cfg;
    cfg.game = spec;
    write_manifest(out, cfg, "solve", {{"converged", res.converged}});

    EXPECT_EQ(read_eta_csv(dir / "eta_bar.csv", g.steps()), res.eta);
    EXPECT_EQ((read_table_csv<PolicyTag>(dir / "policy.csv", g.steps(), g.wealth.size(), "a_star")),
              res.policy);
    EXPECT_EQ((read_table_csv<ValueTag>(dir / "value.csv", g.steps() + 1, g.wealth.size(), "v")), res.values);
    EXPECT_THROW(read_eta_csv(dir / "eta_bar.csv", g.steps() + 1), std::runtime_error);

    const json m = json::parse(read_file(dir / "manifest.json"));
    EXPECT_EQ(m["command"], "solve");
    EXPECT_EQ(m["version"], version_string);
    for (const char* name : {"eta_bar.csv", "policy.csv", "value.csv", "distribution.csv", "trace.csv"}) {
        ASSERT_TRUE(m["artifacts"].contains(name)) << name;
        EXPECT_EQ(m["artifacts"][name]["bytes"], read_file(dir / name).size());
    }
    const ExperimentConfig again = load_config((dir / "manifest.json").string());
    EXPECT_EQ(again.game.params.M, 3.0);
    EXPECT_EQ(again.game.horizon, 2);
    std::filesystem::remove_all(dir);
}
