#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mfgjump/crypto_game.hpp"
#include "mfgjump/crypto_model.hpp"
#include "mfgjump/equilibrium.hpp"
#include "mfgjump/grid.hpp"
#include "mfgjump/random.hpp"

namespace mfgjump {

/**
 * Piecewise-constant, right-continuous flow on [0, T] with breakpoints at
 * the dyadic times k / 2^order.
 */
class StepFlow {
public:
    StepFlow(int order, int horizon, std::vector<double> values)
        : order_(order), horizon_(horizon), values_(std::move(values)) {
        if (order < 0 || horizon < 1) throw ParameterError("StepFlow: invalid order or horizon");
        if (values_.size() != TimeGrid(order, horizon).steps())
            throw ParameterError("StepFlow: expected T * 2^order values");
    }

    static StepFlow constant(int order, int horizon, double value) {
        return {order, horizon, std::vector<double>(TimeGrid(order, horizon).steps(), value)};
    }

    int order() const noexcept { return order_; }
    int horizon() const noexcept { return horizon_; }
    double dt() const noexcept { return std::ldexp(1.0, -order_); }
    std::span<const double> values() const noexcept { return values_; }
    double breakpoint(std::size_t k) const noexcept { return static_cast<double>(k) * dt(); }

    double value_at(double t) const noexcept {
        const double pos = std::floor(t * std::ldexp(1.0, order_));
        const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(values_.size() - 1)));
        return values_[k];
    }

    /// Same function on the finer partition of order m >= order().
    StepFlow refined(int m) const {
        if (m < order_) throw ParameterError("StepFlow::refined: target order below current order");
        const std::size_t rep = std::size_t{1} << static_cast<unsigned>(m - order_);
        std::vector<double> out;
        out.reserve(values_.size() * rep);
        for (double v : values_) out.insert(out.end(), rep, v);
        return {m, horizon_, std::move(out)};
    }

    /// Integral of |flow| over [0, T].
    double l1_norm() const noexcept {
        double acc = 0.0;
        for (double v : values_) acc += std::abs(v);
        return acc * dt();
    }

private:
    int order_;
    int horizon_;
    std::vector<double> values_;
};

/// Integral of |a - b| over [0, T], computed on the common refinement.
inline double l1_distance(const StepFlow& a, const StepFlow& b) {
    if (a.horizon() != b.horizon()) throw ParameterError("l1_distance: horizons differ");
    const int m = std::max(a.order(), b.order());
    const StepFlow fa = a.refined(m);
    const StepFlow fb = b.refined(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < fa.values().size(); ++k) acc += std::abs(fa.values()[k] - fb.values()[k]);
    return acc * fa.dt();
}

/// Interval averages 2^n * integral over [k/2^n, (k+1)/2^n) of a step flow.
inline std::vector<double> discretize_flow(const StepFlow& flow, int n) {
    if (n < 0) throw ParameterError("discretize_flow: order must be >= 0");
    if (n >= flow.order()) {
        const StepFlow fine = flow.refined(n);
        return {fine.values().begin(), fine.values().end()};
    }
    const std::size_t group = std::size_t{1} << static_cast<unsigned>(flow.order() - n);
    const auto v = flow.values();
    std::vector<double> out(v.size() / group);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < group; ++j) acc += v[k * group + j];
        out[k] = acc / static_cast<double>(group);
    }
    return out;
}

/// Interval averages of a continuous flow t -> eta_t on [0, T], by adaptive Gauss-Kronrod.
inline std::vector<double> discretize_flow(const std::function<double(double)>& flow, int horizon, int n) {
    const TimeGrid grid(n, horizon);
    std::vector<double> out(grid.steps());
    const double dt = grid.dt();
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double a = grid.time(k);
        const double integral =
            boost::math::quadrature::gauss_kronrod<double, 31>::integrate(flow, a, a + dt, 12, 1e-13);
        out[k] = integral / dt;
    }
    return out;
}

/// Step-function embedding of an equilibrium flow solved at order n.
inline StepFlow interpolate_equilibrium(const EquilibriumResult& result, int n) {
    const std::size_t K = result.eta.size();
    const std::size_t per_unit = std::size_t{1} << static_cast<unsigned>(n);
    if (K == 0 || K % per_unit != 0) throw ParameterError("interpolate_equilibrium: flow length is not T * 2^n");
    return {n, static_cast<int>(K / per_unit), {result.eta.values().begin(), result.eta.values().end()}};
}

struct RefinementRow {
    int n = 0;
    std::size_t steps = 0;
    std::optional<double> l1_to_next;  ///< distance to the next order's flow
    std::size_t iterations = 0;
    double wall_time_s = 0.0;
    bool converged = false;
    std::string error;  ///< empty on success
};

struct RefinementStudy {
    std::vector<RefinementRow> rows;
    std::vector<std::optional<StepFlow>> flows;
};

using SolvedHook = std::function<void(int n, const CryptoGame&, const EquilibriumResult&)>;

/**
 * Solve the game at each order in `orders` (ascending) and measure the L1
 * distance between consecutive equilibrium step flows. When warm_start is
 * set, each solve starts from the previous order's flow on the finer
 * partition. A failing order is recorded and the study continues.
 */
inline RefinementStudy refinement_study(const GameSpec& base, const SolverConfig& config,
                                        const std::vector<int>& orders, bool warm_start = true,
                                        const SolvedHook& on_solved = {}) {
    for (std::size_t i = 1; i < orders.size(); ++i)
        if (!(orders[i] > orders[i - 1])) throw ParameterError("refinement_study: orders must be ascending");
    RefinementStudy study;
    std::optional<StepFlow> previous;
    for (int n : orders) {
        RefinementRow row;
        row.n = n;
        row.steps = TimeGrid(n, base.horizon).steps();
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<StepFlow> flow;
        try {
            const CryptoGame game = make_game(base.with_order(n));
            SolverConfig cfg = config;
            if (cfg.initial_flow && cfg.initial_flow->size() != row.steps) cfg.initial_flow.reset();
            if (warm_start && previous) {
                const StepFlow start = previous->refined(std::max(n, previous->order()));
                cfg.initial_flow = HashRateFlow(discretize_flow(start, n));
            }
            const EquilibriumResult res = solve(game, cfg);
            row.iterations = res.iterations;
            row.converged = res.converged;
            flow = interpolate_equilibrium(res, n);
            if (on_solved) on_solved(n, game, res);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (flow) previous = flow;
        study.rows.push_back(row);
        study.flows.push_back(std::move(flow));
    }
    for (std::size_t i = 0; i + 1 < study.rows.size(); ++i)
        if (study.flows[i] && study.flows[i + 1])
            study.rows[i].l1_to_next = l1_distance(*study.flows[i], *study.flows[i + 1]);
    return study;
}

/// Constant-drift stretch of a continuous wealth path.
struct PathSegment {
    double t0;
    double t1;
    double x0;      ///< wealth at t0 (after any jump at t0)
    double action;  ///< hash rate held on [t0, t1)
};

/**
 * Sample path of the controlled jump process: wealth falls at rate c * a(t)
 * between jumps and rises by r at each jump.
 */
struct ContinuousPath {
    double x0 = 0.0;
    double cost_rate = 0.0;  ///< c
    double jump_size = 0.0;  ///< r
    std::vector<PathSegment> segments;
    std::vector<double> jump_times;

    std::size_t jump_count() const noexcept { return jump_times.size(); }

    double wealth_at(double t) const noexcept {
        if (segments.empty()) return x0;
        auto it = std::upper_bound(segments.begin(), segments.end(), t,
                                   [](double v, const PathSegment& s) { return v < s.t0; });
        const PathSegment& s = it == segments.begin() ? segments.front() : *std::prev(it);
        return s.x0 - cost_rate * s.action * (std::min(t, s.t1) - s.t0);
    }

    double final_wealth() const noexcept {
        if (segments.empty()) return x0;
        const PathSegment& s = segments.back();
        return s.x0 - cost_rate * s.action * (s.t1 - s.t0);
    }
};

/**
 * Exact simulation by thinning against the unit-rate majorant (lambda < 1).
 *
 * The action a(k, X) is read from the order-n policy with k = floor(t 2^n)
 * and linear interpolation in wealth. It is re-read at every dyadic
 * breakpoint of the policy and flow partitions and after every jump, so
 * wealth is linear between those events.
 */
inline ContinuousPath simulate_continuous_path(const PolicyTable& policy, const WealthGrid& grid,
                                               const TimeGrid& time, const StepFlow& eta,
                                               const ModelParams& params, double x0, std::uint64_t seed) {
    if (policy.rows() != time.steps() || policy.cols() != grid.size())
        throw ParameterError("simulate_continuous_path: policy shape does not match grids");
    if (eta.horizon() != time.horizon()) throw ParameterError("simulate_continuous_path: horizon mismatch");

    ContinuousPath path;
    path.x0 = x0;
    path.cost_rate = params.c;
    path.jump_size = params.r;

    Rng rng = make_stream(seed, 0);
    const int order = std::max(time.order(), eta.order());
    const double dt = std::ldexp(1.0, -order);
    const double horizon = time.horizon();
    const double policy_scale = std::ldexp(1.0, time.order());

    auto action_at = [&](double t, double x) {
        auto k = static_cast<std::size_t>(std::floor(t * policy_scale));
        k = std::min(k, policy.rows() - 1);
        return std::clamp(interp_value(policy.row(k), grid, x), 0.0, params.L);
    };

    double t = 0.0;
    double x = x0;
    std::size_t cell = 0;  // index of the current dyadic interval at `order`
    double seg_start = 0.0;
    double seg_x = x0;
    double a = action_at(0.0, x0);
    auto close_segment = [&](double t_end) {
        if (t_end > seg_start) path.segments.push_back({seg_start, t_end, seg_x, a});
    };

    while (t < horizon) {
        const double boundary = std::min(horizon, static_cast<double>(cell + 1) * dt);
        const double tau = t + exponential1(rng);
        if (tau >= boundary) {
            // memoryless: discard the candidate and restart the clock at the breakpoint
            x = seg_x - params.c * a * (boundary - seg_start);
            close_segment(boundary);
            t = boundary;
            ++cell;
            if (t >= horizon) break;
            seg_start = t;
            seg_x = x;
            a = action_at(t, x);
            continue;
        }
        t = tau;
        const double rate = lambda_eps(a, eta.value_at(t), params);
        if (uniform01(rng) < rate) {
            x = seg_x - params.c * a * (t - seg_start);
            close_segment(t);
            path.jump_times.push_back(t);
            x += params.r;
            seg_start = t;
            seg_x = x;
            a = action_at(t, x);
        }
    }
    return path;
}

}  // namespace mfgjump
