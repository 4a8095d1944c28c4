#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "mfgjump/crypto_game.hpp"
#include "mfgjump/crypto_model.hpp"
#include "mfgjump/dp.hpp"
#include "mfgjump/equilibrium.hpp"
#include "mfgjump/grid.hpp"
#include "mfgjump/parallel.hpp"
#include "mfgjump/random.hpp"

namespace mfgjump {

enum class InteractionMode {
    validation,  ///< jump probabilities use the mean-field flow
    empirical,   ///< jump probabilities use the live mean of the other agents' actions
};

struct SimulationConfig {
    std::size_t agents = 1000;
    std::uint64_t seed = 20240601;
    InteractionMode mode = InteractionMode::validation;
    bool include_self = false;  ///< empirical mode: count the agent in its own mean
    unsigned threads = 0;

    void validate() const {
        if (agents < 1) throw ParameterError("simulation: N must be >= 1");
    }
};

/// Read-only view of the population at one time step.
struct PopulationState {
    std::span<const double> wealth;
    std::span<const double> histogram;  ///< empirical wealth law on the WealthGrid
    double control_mean;                ///< NaN at the terminal step
};

struct Trajectory {
    std::size_t agents = 0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    InteractionMode mode = InteractionMode::validation;
    std::vector<double> wealth;        ///< (K+1) x N, row-major by step
    std::vector<double> actions;       ///< K x N
    std::vector<double> control_mean;  ///< K empirical mean actions
    std::vector<std::uint32_t> wins;   ///< block rewards per agent
    MassTable histogram;               ///< (K+1) x |grid|
    PolicyTable policy;
    HashRateFlow eta;

    std::span<const double> wealth_at(std::size_t k) const noexcept { return {wealth.data() + k * agents, agents}; }
    std::span<const double> actions_at(std::size_t k) const noexcept {
        return {actions.data() + k * agents, agents};
    }

    PopulationState state(std::size_t k) const noexcept {
        return {wealth_at(k), histogram.row(k), k < steps ? control_mean[k] : std::nan("")};
    }
};

namespace detail {

inline double policy_action(const PolicyTable& policy, const WealthGrid& grid, std::size_t k, double x, double L) {
    return std::clamp(interp_value(policy.row(k), grid, x), 0.0, L);
}

/// Draw from the initial law by rejection below the truncation point.
inline double sample_initial_wealth(const InitialWealthSpec& spec, Rng& rng) {
    for (;;) {
        const double x = spec.mean + spec.sd * standard_normal(rng);
        if (!spec.truncate_below || x >= *spec.truncate_below) return x;
    }
}

}  // namespace detail

/**
 * Simulate N agents sharing one policy. Agent i owns the random stream
 * (seed, i): its initial wealth and every win draw come from that stream,
 * so the result does not depend on the thread count.
 */
inline Trajectory simulate_population(const CryptoGame& game, const PolicyTable& policy, const HashRateFlow& eta,
                                      const SimulationConfig& config) {
    config.validate();
    const std::size_t K = game.steps();
    const std::size_t N = config.agents;
    if (policy.rows() != K || policy.cols() != game.wealth.size())
        throw ParameterError("simulate_population: policy shape does not match the game");
    if (eta.size() != K) throw ParameterError("simulate_population: flow length must equal K");

    Trajectory tr;
    tr.agents = N;
    tr.steps = K;
    tr.seed = config.seed;
    tr.mode = config.mode;
    tr.wealth.assign((K + 1) * N, 0.0);
    tr.actions.assign(K * N, 0.0);
    tr.control_mean.assign(K, 0.0);
    tr.wins.assign(N, 0);
    tr.histogram = MassTable(K + 1, game.wealth.size());
    tr.policy = policy;
    tr.eta = eta;

    std::vector<Rng> streams(N);
    for (std::size_t i = 0; i < N; ++i) {
        streams[i] = make_stream(config.seed, i);
        tr.wealth[i] = detail::sample_initial_wealth(game.initial, streams[i]);
    }

    const double L = game.params.L;
    const double dt = game.time.dt();
    const bool leave_one_out = config.mode == InteractionMode::empirical && !config.include_self && N > 1;
    const double inv_n = 1.0 / static_cast<double>(N);

    for (std::size_t k = 0; k < K; ++k) {
        const double* x = tr.wealth.data() + k * N;
        double* a = tr.actions.data() + k * N;
        double* x_next = tr.wealth.data() + (k + 1) * N;
        parallel_for(N, config.threads, [&](std::size_t i) { a[i] = detail::policy_action(policy, game.wealth, k, x[i], L); });
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) total += a[i];
        tr.control_mean[k] = total * inv_n;

        const CryptoStepKernel mean_field(game.params, game.time.order(), eta[k]);
        parallel_for(N, config.threads, [&](std::size_t i) {
            double p;
            if (config.mode == InteractionMode::validation) {
                p = mean_field.jump_probability(a[i]);
            } else {
                const double others = leave_one_out ? (total - a[i]) / static_cast<double>(N - 1) : total * inv_n;
                p = lambda_eps(a[i], std::max(others, 0.0), game.params) * dt;
            }
            const auto [up, down] = step_destinations(x[i], a[i], game.time.order(), game.params);
            const bool win = uniform01(streams[i]) < p;
            x_next[i] = win ? up : down;
            if (win) ++tr.wins[i];
        });
    }

    for (std::size_t k = 0; k <= K; ++k) {
        auto row = tr.histogram.row(k);
        for (double w : tr.wealth_at(k)) deposit(row, game.wealth, w, inv_n);
    }
    return tr;
}

struct ExploitabilityEstimate {
    double gap = 0.0;          ///< best-response gain against the realized mean-control flow
    double noise_floor = 0.0;  ///< gap induced by one standard error of that flow
};

/**
 * Value gap between a best response and the shared policy, both evaluated
 * against the trajectory's empirical mean-control flow. The noise floor is
 * the largest gap of the shared policy against the mean-field flow shifted by
 * plus or minus one Monte Carlo standard error per step.
 */
inline ExploitabilityEstimate empirical_exploitability(const Trajectory& tr, const CryptoGame& game) {
    if (tr.steps != game.steps()) throw ParameterError("empirical_exploitability: trajectory does not match game");
    const double L = game.params.L;
    const HashRateFlow realized(std::vector<double>(tr.control_mean.begin(), tr.control_mean.end()));
    ExploitabilityEstimate out;
    out.gap = std::max(0.0, best_response_value_gap(game, realized, tr.policy));

    std::vector<double> se(tr.steps, 0.0);
    if (tr.agents > 1) {
        for (std::size_t k = 0; k < tr.steps; ++k) {
            const auto a = tr.actions_at(k);
            double ss = 0.0;
            for (double v : a) ss += (v - tr.control_mean[k]) * (v - tr.control_mean[k]);
            se[k] = std::sqrt(ss / static_cast<double>(tr.agents - 1) / static_cast<double>(tr.agents));
        }
    }
    for (double sign : {-1.0, 1.0}) {
        std::vector<double> shifted(tr.steps);
        for (std::size_t k = 0; k < tr.steps; ++k) shifted[k] = std::clamp(tr.eta[k] + sign * se[k], 0.0, L);
        out.noise_floor = std::max(out.noise_floor,
                                   best_response_value_gap(game, HashRateFlow(std::move(shifted)), tr.policy));
    }
    return out;
}

/// Gini coefficient of nonnegative values (0 when all are zero).
inline double gini(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double weighted = 0.0;
    double total = 0.0;
    const double n = static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * v[i];
        total += v[i];
    }
    return total > 0.0 ? weighted / (n * total) : 0.0;
}

struct WealthStatistics {
    std::vector<double> mean;
    std::vector<double> variance;  ///< population variance (divisor N)
    std::vector<double> skewness;  ///< 0 when the variance is 0
    std::vector<double> gini;      ///< on wealth shifted so that its minimum is >= 0
    std::vector<double> dropout;   ///< share of agents whose action is 0
};

/**
 * Per-step statistics for k = 0..K. The dropout share at the terminal step
 * applies the last decision rule to the terminal wealth.
 */
inline WealthStatistics wealth_statistics(const Trajectory& tr, const WealthGrid& grid, double L) {
    WealthStatistics s;
    const std::size_t rows = tr.steps + 1;
    const double n = static_cast<double>(tr.agents);
    for (auto* v : {&s.mean, &s.variance, &s.skewness, &s.gini, &s.dropout}) v->assign(rows, 0.0);
    for (std::size_t k = 0; k < rows; ++k) {
        const auto x = tr.wealth_at(k);
        const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
        double m2 = 0.0;
        double m3 = 0.0;
        for (double v : x) {
            const double d = v - m;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        s.mean[k] = m;
        s.variance[k] = m2;
        s.skewness[k] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;

        const double shift = std::min(0.0, *std::min_element(x.begin(), x.end()));
        std::vector<double> shifted(x.begin(), x.end());
        for (double& v : shifted) v -= shift;
        s.gini[k] = gini(std::move(shifted));

        std::size_t idle = 0;
        if (k < tr.steps) {
            for (double a : tr.actions_at(k)) idle += a == 0.0;
        } else if (tr.steps > 0) {
            for (double v : x) idle += detail::policy_action(tr.policy, grid, tr.steps - 1, v, L) == 0.0;
        }
        s.dropout[k] = static_cast<double>(idle) / n;
    }
    return s;
}

/// Integral over [0, T] of |empirical mean control - eta|.
inline double control_mean_l1(const Trajectory& tr, double dt) {
    double acc = 0.0;
    for (std::size_t k = 0; k < tr.steps; ++k) acc += std::abs(tr.control_mean[k] - tr.eta[k]);
    return acc * dt;
}

}  // namespace mfgjump
