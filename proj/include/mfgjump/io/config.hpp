#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfgjump/crypto_game.hpp"
#include "mfgjump/equilibrium.hpp"
#include "mfgjump/error.hpp"
#include "mfgjump/nplayer.hpp"

namespace mfgjump {

/// Malformed or invalid experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    GameSpec game;
    SolverConfig solver;
    SimulationConfig simulation;
    std::string output_dir = "out";
    std::optional<std::string> source;  ///< path the config was read from

    void validate() const {
        game.validate();
        solver.validate();
        simulation.validate();
    }
};

namespace detail {

using json = nlohmann::json;

// Reads typed keys from one JSON object and rejects anything it was not asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        get(key, v);
        out = v;
    }

    void mark(const char* key) { seen_.insert(key); }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& sub(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) throw ConfigError(name_ + ": unknown key '" + item.key() + "'");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

inline const char* refine_name(OptimizerConfig::Refine r) {
    switch (r) {
        case OptimizerConfig::Refine::none: return "none";
        case OptimizerConfig::Refine::golden_section: return "golden_section";
        case OptimizerConfig::Refine::piecewise_exact: return "piecewise_exact";
    }
    return "none";
}

inline const char* utility_name(UtilitySpec::Kind k) {
    switch (k) {
        case UtilitySpec::Kind::crra_sqrt: return "crra_sqrt";
        case UtilitySpec::Kind::crra: return "crra";
        case UtilitySpec::Kind::constant: return "constant";
        case UtilitySpec::Kind::table: return "table";
    }
    return "crra_sqrt";
}

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

}  // namespace detail

/// Parse an experiment config. A run manifest (with a "config" member) is accepted as well.
inline ExperimentConfig parse_config(const nlohmann::json& root_in) {
    using detail::Section;
    const nlohmann::json& root = root_in.is_object() && root_in.contains("config") && root_in.contains("artifacts")
                                     ? root_in.at("config")
                                     : root_in;
    ExperimentConfig cfg;
    Section top(root, "config");
    auto section = [&](const char* key, auto&& fn) {
        top.mark(key);
        if (!top.has(key)) return;
        Section s(top.sub(key), key);
        fn(s);
        s.finish();
    };
    section("model", [&](Section& s) {
        auto& p = cfg.game.params;
        s.get("c", p.c);
        s.get("r", p.r);
        s.get("M", p.M);
        s.get("eps", p.eps);
        s.get("L", p.L);
    });
    section("utility", [&](Section& s) {
        auto& u = cfg.game.utility;
        std::string kind = detail::utility_name(u.kind);
        s.get("kind", kind);
        if (kind == "crra_sqrt") u.kind = UtilitySpec::Kind::crra_sqrt;
        else if (kind == "crra") u.kind = UtilitySpec::Kind::crra;
        else if (kind == "constant") u.kind = UtilitySpec::Kind::constant;
        else if (kind == "table") u.kind = UtilitySpec::Kind::table;
        else throw ConfigError("utility.kind: unknown value '" + kind + "'");
        s.get("gamma", u.gamma);
        s.get("value", u.value);
        s.get("x", u.table_x);
        s.get("y", u.table_y);
    });
    section("time", [&](Section& s) {
        s.get("n", cfg.game.order);
        s.get("T", cfg.game.horizon);
    });
    section("grid", [&](Section& s) {
        auto& g = cfg.game;
        s.get("wealth_nodes", g.wealth_nodes);
        s.get("action_nodes", g.action_nodes);
        s.get("x_min", g.x_min);
        s.get("x_max", g.x_max);
        s.get("graded", g.graded);
        s.get("core_fraction", g.core_fraction);
        s.get("core_min", g.core_min);
        s.get("core_max", g.core_max);
    });
    section("optimizer", [&](Section& s) {
        auto& o = cfg.game.optimizer;
        std::string refine = detail::refine_name(o.refine);
        s.get("refine", refine);
        if (refine == "none") o.refine = OptimizerConfig::Refine::none;
        else if (refine == "golden_section") o.refine = OptimizerConfig::Refine::golden_section;
        else if (refine == "piecewise_exact") o.refine = OptimizerConfig::Refine::piecewise_exact;
        else throw ConfigError("optimizer.refine: unknown value '" + refine + "'");
        s.get("golden_width", o.golden_width);
        s.get("drift_safety", o.drift_safety);
        s.get("threads", o.threads);
    });
    section("solver", [&](Section& s) {
        auto& v = cfg.solver;
        s.get("damping", v.damping);
        s.get("tol", v.tol);
        s.get("max_iter", v.max_iter);
        s.get("initial_constant", v.initial_constant);
        std::optional<std::vector<double>> flow;
        s.get("initial_flow", flow);
        if (flow) v.initial_flow = HashRateFlow(*flow);
        int scheme = static_cast<int>(v.scheme);
        s.get("scheme", scheme);
        if (scheme != 1 && scheme != 2) throw ConfigError("solver.scheme: must be 1 or 2");
        v.scheme = static_cast<Scheme>(scheme);
        s.get("eps_schedule", v.eps_schedule);
        s.get("residual_safety", v.residual_safety);
        s.get("adaptive_damping", v.adaptive_damping);
        s.get("damping_max", v.damping_max);
    });
    section("initial_distribution", [&](Section& s) {
        auto& d = cfg.game.initial;
        s.get("mean", d.mean);
        s.get("sd", d.sd);
        s.get("truncate_below", d.truncate_below);
    });
    section("simulation", [&](Section& s) {
        auto& m = cfg.simulation;
        s.get("agents", m.agents);
        s.get("seed", m.seed);
        std::string mode = m.mode == InteractionMode::validation ? "validation" : "empirical";
        s.get("mode", mode);
        if (mode == "validation") m.mode = InteractionMode::validation;
        else if (mode == "empirical") m.mode = InteractionMode::empirical;
        else throw ConfigError("simulation.mode: unknown value '" + mode + "'");
        s.get("include_self", m.include_self);
        s.get("threads", m.threads);
    });
    section("forward", [&](Section& s) { s.get("clamp_threshold", cfg.game.clamp_threshold); });
    section("output", [&](Section& s) { s.get("dir", cfg.output_dir); });
    top.finish();

    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    } catch (const GridError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    ExperimentConfig cfg = parse_config(j);
    cfg.source = path;
    return cfg;
}

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    using detail::optional_json;
    const auto& g = cfg.game;
    const auto& v = cfg.solver;
    nlohmann::json j;
    j["model"] = {{"c", g.params.c}, {"r", g.params.r}, {"M", g.params.M}, {"eps", g.params.eps}, {"L", g.params.L}};
    j["utility"] = {{"kind", detail::utility_name(g.utility.kind)},
                    {"gamma", g.utility.gamma},
                    {"value", g.utility.value},
                    {"x", g.utility.table_x},
                    {"y", g.utility.table_y}};
    j["time"] = {{"n", g.order}, {"T", g.horizon}};
    j["grid"] = {{"wealth_nodes", g.wealth_nodes}, {"action_nodes", g.action_nodes},
                 {"x_min", optional_json(g.x_min)},   {"x_max", optional_json(g.x_max)},
                 {"graded", g.graded},                {"core_fraction", g.core_fraction},
                 {"core_min", optional_json(g.core_min)}, {"core_max", optional_json(g.core_max)}};
    j["optimizer"] = {{"refine", detail::refine_name(g.optimizer.refine)},
                      {"golden_width", g.optimizer.golden_width},
                      {"drift_safety", g.optimizer.drift_safety},
                      {"threads", g.optimizer.threads}};
    nlohmann::json flow = nullptr;
    if (v.initial_flow) flow = std::vector<double>(v.initial_flow->values().begin(), v.initial_flow->values().end());
    j["solver"] = {{"damping", v.damping},
                   {"tol", v.tol},
                   {"max_iter", v.max_iter},
                   {"initial_constant", v.initial_constant},
                   {"initial_flow", flow},
                   {"scheme", static_cast<int>(v.scheme)},
                   {"eps_schedule", v.eps_schedule},
                   {"residual_safety", v.residual_safety},
                   {"adaptive_damping", v.adaptive_damping},
                   {"damping_max", v.damping_max}};
    j["initial_distribution"] = {{"mean", g.initial.mean}, {"sd", g.initial.sd},
                                 {"truncate_below", optional_json(g.initial.truncate_below)}};
    const auto& s = cfg.simulation;
    j["simulation"] = {{"agents", s.agents},
                       {"seed", s.seed},
                       {"mode", s.mode == InteractionMode::validation ? "validation" : "empirical"},
                       {"include_self", s.include_self},
                       {"threads", s.threads}};
    j["forward"] = {{"clamp_threshold", g.clamp_threshold}};
    j["output"] = {{"dir", cfg.output_dir}};
    return j;
}

}  // namespace mfgjump
