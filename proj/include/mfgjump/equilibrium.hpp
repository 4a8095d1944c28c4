#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mfgjump/crypto_game.hpp"
#include "mfgjump/crypto_model.hpp"
#include "mfgjump/dp.hpp"

namespace mfgjump {

struct SolverConfig {
    double damping = 0.9;      ///< weight on the previous flow
    double tol = 1e-8;         ///< sup-norm stopping tolerance on successive flows
    std::size_t max_iter = 5000;
    double initial_constant = 1.0;
    std::optional<HashRateFlow> initial_flow;  ///< overrides initial_constant
    Scheme scheme = Scheme::mean;
    std::vector<double> eps_schedule;  ///< empty: single run at the model's eps
    double residual_safety = 10.0;
    /// When the residual grows, move damping halfway towards 1 (capped at damping_max).
    bool adaptive_damping = false;
    double damping_max = 0.9999;

    void validate() const {
        if (!(damping >= 0.0 && damping < 1.0)) throw ParameterError("solver: damping must lie in [0, 1)");
        if (adaptive_damping && !(damping_max >= damping && damping_max < 1.0))
            throw ParameterError("solver: damping_max must lie in [damping, 1)");
        if (!(tol > 0.0)) throw ParameterError("solver: tol must be > 0");
        if (max_iter == 0) throw ParameterError("solver: max_iter must be >= 1");
        if (!(initial_constant >= 0.0)) throw ParameterError("solver: initial flow must be >= 0");
        for (double e : eps_schedule)
            if (!(e >= 0.0)) throw ParameterError("solver: eps schedule entries must be >= 0");
    }
};

struct IterationTelemetry {
    std::size_t iteration;
    double residual;
    double eta_min;
    double eta_max;
    double damping;
};

using TelemetryHook = std::function<void(const IterationTelemetry&)>;

struct EquilibriumResult {
    HashRateFlow eta;
    PolicyTable policy;
    ValueTable values;
    DistributionFlow flow;
    std::vector<double> residual_trace;  ///< sup-norm change per iteration
    double consistency_residual = 0.0;   ///< undamped sup_k |eta_k - induced mean_k| at eta
    double residual_bound = 0.0;         ///< tol / (1 - damping) * residual_safety
    double final_damping = 0.0;          ///< damping in use at the last iteration
    std::size_t iterations = 0;
    bool converged = false;
    bool positive_flow = false;          ///< min_k eta_k > 0
    std::vector<DiscreteControlMeasure> measures;  ///< measure-valued flow (scheme 1 only)
};

/// Best response to a fixed mean flow (scheme 2 kernels).
inline BackwardResult best_response(const CryptoGame& game, const HashRateFlow& eta) {
    if (eta.size() != game.steps()) throw ParameterError("best_response: flow length must equal K");
    return backward_induction(game.kernels(eta), game.steps(), game.phi, game.wealth, game.actions,
                              game.optimizer);
}

inline DistributionFlow induced_distribution(const CryptoGame& game, const HashRateFlow& eta,
                                             const PolicyTable& policy) {
    return kolmogorov_forward(game.kernels(eta), policy, game.mu0, game.wealth, game.clamp_threshold);
}

struct FixedPointStep {
    HashRateFlow eta_next;
    PolicyTable policy;
    ValueTable values;
    DistributionFlow flow;
};

/**
 * One damped best-response iteration: best response to eta, forward
 * propagation of mu0 under it, then
 * eta_next[k] = damping * eta[k] + (1 - damping) * induced mean[k].
 */
inline FixedPointStep fixed_point_step(const CryptoGame& game, const HashRateFlow& eta,
                                       const SolverConfig& config) {
    auto br = best_response(game, eta);
    auto flow = induced_distribution(game, eta, br.policy);
    const double th = config.damping;
    std::vector<double> next(eta.size());
    for (std::size_t k = 0; k < eta.size(); ++k)
        next[k] = std::clamp(th * eta[k] + (1.0 - th) * flow.control_mean[k], 0.0, game.params.L);
    return {HashRateFlow(std::move(next)), std::move(br.policy), std::move(br.values), std::move(flow)};
}

namespace detail {

inline std::vector<DiscreteControlMeasure> induced_measures(const CryptoGame& game, const PolicyTable& policy,
                                                            const MassTable& mu) {
    std::vector<DiscreteControlMeasure> out;
    out.reserve(policy.rows());
    for (std::size_t k = 0; k < policy.rows(); ++k)
        out.push_back(DiscreteControlMeasure::on_grid(game.actions,
                                                      project_on_actions(game.actions, policy.row(k), mu.row(k))));
    return out;
}

inline HashRateFlow measure_means(std::span<const DiscreteControlMeasure> flow) {
    std::vector<double> m(flow.size());
    for (std::size_t k = 0; k < flow.size(); ++k) m[k] = flow[k].mean();
    return HashRateFlow(std::move(m));
}

inline EquilibriumResult solve_measure_flow(const CryptoGame& game, const HashRateFlow& start,
                                            const SolverConfig& config, const TelemetryHook& hook,
                                            EquilibriumResult res) {
    const std::size_t K = game.steps();
    std::vector<DiscreteControlMeasure> flow;
    flow.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double h = start[k];
        flow.push_back(DiscreteControlMeasure::on_grid(game.actions, project_on_actions(game.actions, {&h, 1},
                                                                                        std::vector<double>{1.0})));
    }
    HashRateFlow eta = measure_means(flow);
    double th = config.damping;
    double previous_change = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        auto kernels = game.kernels(std::span<const DiscreteControlMeasure>(flow));
        auto br = backward_induction(kernels, K, game.phi, game.wealth, game.actions, game.optimizer);
        auto dist = kolmogorov_forward(kernels, br.policy, game.mu0, game.wealth, game.clamp_threshold);
        auto induced = induced_measures(game, br.policy, dist.mu);
        std::vector<DiscreteControlMeasure> next;
        next.reserve(K);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> w(game.actions.size());
            for (std::size_t j = 0; j < w.size(); ++j)
                w[j] = th * flow[k].weights()[j] + (1.0 - th) * induced[k].weights()[j];
            double total = 0.0;
            for (double x : w) total += x;
            for (double& x : w) x /= total;
            next.push_back(DiscreteControlMeasure::on_grid(game.actions, std::move(w)));
        }
        HashRateFlow eta_next = measure_means(next);
        const double change = sup_distance(eta_next.values(), eta.values());
        res.residual_trace.push_back(change);
        ++res.iterations;
        flow = std::move(next);
        eta = std::move(eta_next);
        if (hook) hook({res.iterations, change, eta.min(), eta.max(), th});
        if (config.adaptive_damping && change > previous_change)
            th = std::min(config.damping_max, 0.5 * (1.0 + th));
        previous_change = change;
        if (change < config.tol) {
            res.converged = true;
            break;
        }
    }
    res.final_damping = th;
    auto kernels = game.kernels(std::span<const DiscreteControlMeasure>(flow));
    auto br = backward_induction(kernels, K, game.phi, game.wealth, game.actions, game.optimizer);
    res.flow = kolmogorov_forward(kernels, br.policy, game.mu0, game.wealth, game.clamp_threshold);
    res.policy = std::move(br.policy);
    res.values = std::move(br.values);
    res.consistency_residual = consistency_residual(eta, res.flow);
    res.eta = std::move(eta);
    res.measures = std::move(flow);
    return res;
}

}  // namespace detail

/**
 * Damped fixed-point iteration for the equilibrium hash-rate flow.
 *
 * Stops when successive flows differ by less than tol in sup norm, or after
 * max_iter iterations (converged = false; the last iterate and the full
 * residual trace are returned). A final undamped best-response pass at the
 * returned flow yields policy, values, distribution and the consistency
 * residual. With an eps schedule, each stage is warm-started from the
 * previous stage's flow.
 */
inline EquilibriumResult solve(const CryptoGame& game, const SolverConfig& config,
                               const TelemetryHook& hook = {}) {
    config.validate();
    const std::size_t K = game.steps();
    HashRateFlow eta = config.initial_flow ? *config.initial_flow
                                           : HashRateFlow::constant(K, std::min(config.initial_constant, game.params.L));
    if (eta.size() != K) throw ParameterError("solver: initial flow length must equal K");

    EquilibriumResult res;
    res.final_damping = config.damping;
    const std::vector<double> schedule =
        config.eps_schedule.empty() ? std::vector<double>{game.params.eps} : config.eps_schedule;

    CryptoGame stage = game;
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        stage.params.eps = schedule[s];
        stage.params.validate();
        const bool last = s + 1 == schedule.size();
        if (config.scheme == Scheme::measure) {
            EquilibriumResult partial = detail::solve_measure_flow(stage, eta, config, hook, std::move(res));
            eta = partial.eta;
            res = std::move(partial);
            if (!last) res.converged = false;
            continue;
        }
        res.converged = false;
        SolverConfig current = config;
        double previous_change = std::numeric_limits<double>::infinity();
        for (std::size_t it = 0; it < config.max_iter; ++it) {
            auto step = fixed_point_step(stage, eta, current);
            const double change = sup_distance(step.eta_next.values(), eta.values());
            res.residual_trace.push_back(change);
            ++res.iterations;
            eta = std::move(step.eta_next);
            if (hook) hook({res.iterations, change, eta.min(), eta.max(), current.damping});
            if (config.adaptive_damping && change > previous_change)
                current.damping = std::min(config.damping_max, 0.5 * (1.0 + current.damping));
            previous_change = change;
            res.final_damping = current.damping;
            if (change < config.tol) {
                res.converged = true;
                break;
            }
        }
        if (last) {
            auto br = best_response(stage, eta);
            res.flow = induced_distribution(stage, eta, br.policy);
            res.policy = std::move(br.policy);
            res.values = std::move(br.values);
            res.consistency_residual = consistency_residual(eta, res.flow);
            res.eta = eta;
        }
    }
    res.residual_bound = config.tol / (1.0 - res.final_damping) * config.residual_safety;
    res.positive_flow = res.eta.size() > 0 && res.eta.min() > 0.0;
    return res;
}

/**
 * Exploitability of a candidate policy against a fixed flow:
 * integral over mu0 of (best-response value - candidate value) at t = 0.
 */
inline double best_response_value_gap(const CryptoGame& game, const HashRateFlow& eta,
                                      const PolicyTable& candidate) {
    if (candidate.rows() != game.steps() || (candidate.rows() > 0 && candidate.cols() != game.wealth.size()))
        throw ParameterError("best_response_value_gap: policy shape mismatch");
    const auto br = best_response(game, eta);
    const ValueTable cand = evaluate_policy(game.kernels(eta), candidate, game.phi, game.wealth);
    double gap = 0.0;
    for (std::size_t i = 0; i < game.wealth.size(); ++i)
        gap += (br.values(0, i) - cand(0, i)) * game.mu0[i];
    return gap;
}

}  // namespace mfgjump
