#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfgjump/crypto_game.hpp"
#include "mfgjump/equilibrium.hpp"
#include "oracles.hpp"

using namespace mfgjump;

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

oracle::Model oracle_model(const CryptoGame& g) {
    return {g.params.c, g.params.r, g.params.M, g.params.eps, g.time.dt()};
}

/// A few hundred nodes, short horizon: solves in well under a second.
CryptoGame small_game(int horizon, int order, double M, std::size_t nodes = 96, std::size_t actions = 24) {
    GameSpec spec;
    spec.params.M = M;
    spec.horizon = horizon;
    spec.order = order;
    spec.wealth_nodes = nodes;
    spec.action_nodes = actions;
    spec.clamp_threshold = INFINITY;
    return make_game(spec);
}

/// One agent type at wealth x0, one step, uniform grid on [0, 20].
CryptoGame dirac_game(double M, double x0) {
    GameSpec spec;
    spec.params.M = M;
    spec.horizon = 1;
    spec.order = 0;
    spec.wealth_nodes = 401;
    spec.action_nodes = 41;
    spec.graded = false;
    spec.x_min = 0.0;
    spec.x_max = 20.0;
    spec.clamp_threshold = INFINITY;
    CryptoGame g = make_game(spec);
    std::fill(g.mu0.begin(), g.mu0.end(), 0.0);
    g.mu0[g.wealth.locate(x0).lo + (g.wealth.locate(x0).w_hi > 0.5 ? 1 : 0)] = 1.0;
    return g;
}

/// Oracle best action of the single agent by a dense scan of [0, L].
double scan_best_action(const CryptoGame& g, double x0, double h) {
    const auto xs = to_vec(g.wealth.points());
    const auto m = oracle_model(g);
    const std::size_t n = 100000;
    double best = -INFINITY;
    double arg = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
        const double a = g.params.L * static_cast<double>(j) / static_cast<double>(n);
        const double v = oracle::continuation(xs, g.phi, x0, a, h, m);
        if (v > best) {
            best = v;
            arg = a;
        }
    }
    return arg;
}

}  // namespace

TEST(FixedPointStep, MatchesEnumerationOracle) {
    CryptoGame g = small_game(3, 1, 1000.0, 48, 12);
    g.optimizer.refine = OptimizerConfig::Refine::none;
    const auto xs = to_vec(g.wealth.points());
    const auto acts = to_vec(g.actions.points());
    oracle::Gen gen(21);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> eta(g.steps());
        for (double& e : eta) e = gen.uniform(1e-4, 0.05);
        SolverConfig cfg;
        cfg.damping = gen.uniform(0.0, 0.99);
        const auto step = fixed_point_step(g, HashRateFlow(eta), cfg);
        const auto bell = oracle::enumerate_backward(xs, acts, g.phi, eta, oracle_model(g));
        const auto fwd = oracle::dense_forward(xs, bell.policy, g.mu0, eta, oracle_model(g));
        for (std::size_t k = 0; k < g.steps(); ++k) {
            EXPECT_NEAR(step.eta_next[k], cfg.damping * eta[k] + (1.0 - cfg.damping) * fwd.control_mean[k], 1e-12);
            for (std::size_t i = 0; i < xs.size(); ++i) ASSERT_NEAR(step.values(k, i), bell.values[k][i], 1e-12);
        }
    }
}

TEST(FixedPointStepProperty, UpdateIdentity) {
    const CryptoGame g = small_game(4, 1, 1000.0);
    oracle::Gen gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> eta(g.steps());
        for (double& e : eta) e = gen.uniform(0.0, 0.1);
        SolverConfig cfg;
        cfg.damping = trial == 0 ? 0.0 : gen.uniform(0.0, 0.999);
        const auto step = fixed_point_step(g, HashRateFlow(eta), cfg);
        for (std::size_t k = 0; k < g.steps(); ++k) {
            const double m = step.flow.control_mean[k];
            ASSERT_NEAR(step.eta_next[k], cfg.damping * eta[k] + (1.0 - cfg.damping) * m, 1e-15);
            if (trial == 0) {
                ASSERT_EQ(step.eta_next[k], m);  // no damping: the induced mean itself
            }
        }
    }
}

TEST(Solve, ConstantUtilityGivesZeroFlow) {
    GameSpec spec;
    spec.horizon = 3;
    spec.wealth_nodes = 64;
    spec.action_nodes = 16;
    spec.utility = UtilitySpec::constant(1.0);
    const CryptoGame g = make_game(spec);
    const auto res = solve(g, SolverConfig{});
    ASSERT_TRUE(res.converged);
    for (std::size_t k = 0; k < g.steps(); ++k) EXPECT_LT(res.eta[k], 1e-7);
    for (double a : res.policy.data()) EXPECT_EQ(a, 0.0);
}

TEST(Solve, SingleAgentTypeMatchesBisectionOracle) {
    for (double M : {1.0, 3.0, 10.0}) {
        const double x0 = 10.0;
        const CryptoGame g = dirac_game(M, x0);
        SolverConfig cfg;
        cfg.tol = 1e-12;
        cfg.initial_constant = 0.5;
        const auto res = solve(g, cfg);
        ASSERT_TRUE(res.converged) << "M = " << M;

        // h = a*(h): a*(h) - h is decreasing, so bisect.
        double lo = 0.0;
        double hi = g.params.L;
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            (scan_best_action(g, x0, mid) > mid ? lo : hi) = mid;
        }
        const double h = 0.5 * (lo + hi);
        EXPECT_GT(h, 1e-3);
        EXPECT_NEAR(res.eta[0], h, 2e-4) << "M = " << M;
        EXPECT_NEAR(res.policy(0, 200), res.eta[0], 1e-9);
        EXPECT_LT(res.consistency_residual, 1e-9);
    }
}

TEST(Solve, FixedPointIsPreservedByTheStep) {
    const CryptoGame g = small_game(4, 1, 3.0);
    SolverConfig cfg;
    cfg.tol = 1e-13;
    const auto res = solve(g, cfg);
    ASSERT_TRUE(res.converged);
    cfg.damping = 0.0;
    const auto step = fixed_point_step(g, res.eta, cfg);
    EXPECT_LT(sup_distance(step.eta_next.values(), res.eta.values()), 1e-11);
    EXPECT_LE(res.consistency_residual, res.residual_bound);
}

TEST(Solve, NonConvergenceReturnsTraceAndLastIterate) {
    const CryptoGame g = small_game(4, 1, 1000.0);
    SolverConfig cfg;
    cfg.max_iter = 3;
    cfg.tol = 1e-300;
    std::size_t calls = 0;
    const auto res = solve(g, cfg, [&](const IterationTelemetry& t) {
        ++calls;
        EXPECT_EQ(t.iteration, calls);
        EXPECT_EQ(t.damping, 0.9);
    });
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.iterations, 3u);
    EXPECT_EQ(res.residual_trace.size(), 3u);
    EXPECT_EQ(calls, 3u);
    EXPECT_EQ(res.eta.size(), g.steps());
    EXPECT_EQ(res.policy.rows(), g.steps());
    EXPECT_EQ(res.values.rows(), g.steps() + 1);
}

TEST(Solve, AdaptiveDampingConvergesWhereFixedDampingOscillates) {
    const CryptoGame g = small_game(6, 1, 1000.0, 128, 32);
    SolverConfig fixed;
    fixed.initial_constant = 0.01;
    fixed.max_iter = 200;
    const auto a = solve(g, fixed);
    EXPECT_FALSE(a.converged);

    SolverConfig adaptive = fixed;
    adaptive.adaptive_damping = true;
    adaptive.max_iter = 2000;
    const auto b = solve(g, adaptive);
    ASSERT_TRUE(b.converged);
    EXPECT_GT(b.final_damping, 0.9);
    EXPECT_LE(b.final_damping, adaptive.damping_max);
    EXPECT_LE(b.consistency_residual, b.residual_bound);
    EXPECT_TRUE(b.positive_flow);
    EXPECT_NEAR(b.residual_bound, adaptive.tol / (1.0 - b.final_damping) * adaptive.residual_safety, 1e-18);
}

TEST(Solve, BestResponsePolicyHasZeroGap) {
    const CryptoGame g = small_game(4, 1, 3.0);
    const auto res = solve(g, SolverConfig{});
    ASSERT_TRUE(res.converged);
    EXPECT_NEAR(best_response_value_gap(g, res.eta, res.policy), 0.0, 1e-12);
    const PolicyTable idle(g.steps(), g.wealth.size(), 0.0);
    EXPECT_GT(best_response_value_gap(g, res.eta, idle), 1e-6);
    EXPECT_THROW(best_response_value_gap(g, res.eta, PolicyTable(1, 2, 0.0)), ParameterError);
}

TEST(Solve, EpsScheduleEndsAtTheTargetModel) {
    const CryptoGame g = small_game(4, 1, 3.0);
    SolverConfig cfg;
    cfg.tol = 1e-12;
    const auto direct = solve(g, cfg);
    cfg.eps_schedule = {1.0, 0.1, 0.0};
    const auto staged = solve(g, cfg);
    ASSERT_TRUE(direct.converged);
    ASSERT_TRUE(staged.converged);
    EXPECT_LT(sup_distance(direct.eta.values(), staged.eta.values()), 1e-9);
}

TEST(Solve, MeasureSchemeMeansFormTheFlow) {
    const CryptoGame g = small_game(3, 1, 3.0);
    SolverConfig cfg;
    cfg.scheme = Scheme::measure;
    const auto res = solve(g, cfg);
    ASSERT_TRUE(res.converged);
    ASSERT_EQ(res.measures.size(), g.steps());
    for (std::size_t k = 0; k < g.steps(); ++k) {
        EXPECT_NEAR(res.measures[k].mean(), res.eta[k], 1e-12);
        double total = 0.0;
        for (double w : res.measures[k].weights()) total += w;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    // the induced mean action of the measure flow agrees with its own mean
    EXPECT_LT(res.consistency_residual, 1e-6);
}

TEST(SolverConfig, Validation) {
    SolverConfig c;
    c.damping = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = SolverConfig{};
    c.tol = 0.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = SolverConfig{};
    c.adaptive_damping = true;
    c.damping_max = 0.5;
    EXPECT_THROW(c.validate(), ParameterError);
    c = SolverConfig{};
    c.initial_flow = HashRateFlow::constant(2, 0.1);
    EXPECT_THROW(solve(small_game(2, 1, 3.0), c), ParameterError);
}
