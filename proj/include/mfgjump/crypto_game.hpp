#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "mfgjump/crypto_model.hpp"
#include "mfgjump/dp.hpp"
#include "mfgjump/grid.hpp"

namespace mfgjump {

/// Normal initial wealth law, optionally truncated from below.
struct InitialWealthSpec {
    double mean = 10.0;
    double sd = 2.0;
    std::optional<double> truncate_below = 0.0;

    void validate() const {
        if (!(sd > 0.0)) throw ParameterError("initial distribution: sd must be > 0");
        if (!std::isfinite(mean)) throw ParameterError("initial distribution: mean must be finite");
    }

    /// Quantile of the (truncated) law.
    double quantile(double prob) const {
        const boost::math::normal_distribution<double> std_normal;
        const double lo = truncate_below ? boost::math::cdf(std_normal, (*truncate_below - mean) / sd) : 0.0;
        const double u = lo + prob * (1.0 - lo);
        return mean + sd * boost::math::quantile(std_normal, std::clamp(u, 1e-300, 1.0 - 1e-16));
    }
};

/**
 * Project the initial law onto the grid: node i receives the expectation of
 * its hat function, so every cell's mass is split preserving its first
 * moment. Mass outside [x_min, x_max] lands on the boundary nodes.
 */
inline std::vector<double> project_initial_wealth(const InitialWealthSpec& spec, const WealthGrid& grid) {
    spec.validate();
    const double lb = spec.truncate_below.value_or(-std::numeric_limits<double>::infinity());
    auto cdf = [&](double x) {
        if (x <= lb) return 0.0;
        return 0.5 * std::erfc(-(x - spec.mean) / (spec.sd * std::sqrt(2.0)));
    };
    auto pdf = [&](double x) {
        if (x <= lb || !std::isfinite(x)) return 0.0;
        const double z = (x - spec.mean) / spec.sd;
        return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    };
    const double base = std::isfinite(lb) ? cdf(std::nextafter(lb, INFINITY)) : 0.0;
    const double z_total = 1.0 - base;
    // P(X <= x) and E[X; X <= x] under the truncated law
    auto prob_below = [&](double x) { return x <= lb ? 0.0 : (cdf(x) - base) / z_total; };
    auto partial_mean = [&](double x) {
        if (x <= lb) return 0.0;
        const double lo_pdf = std::isfinite(lb) ? pdf(std::nextafter(lb, INFINITY)) : 0.0;
        return (spec.mean * (cdf(x) - base) - spec.sd * (pdf(x) - lo_pdf)) / z_total;
    };

    const std::size_t n = grid.size();
    std::vector<double> mass(n, 0.0);
    mass.front() += prob_below(grid.x_min());
    mass.back() += 1.0 - prob_below(grid.x_max());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = grid[i];
        const double b = grid[i + 1];
        const double p = prob_below(b) - prob_below(a);
        if (p <= 0.0) continue;
        const double m1 = partial_mean(b) - partial_mean(a);
        const double right = std::clamp((m1 - a * p) / (b - a), 0.0, p);
        mass[i + 1] += right;
        mass[i] += p - right;
    }
    double total = 0.0;
    for (double m : mass) total += m;
    for (double& m : mass) m /= total;
    return mass;
}

/**
 * Wealth nodes on [x_lo, x_hi]: `core_nodes` uniformly spaced points on
 * [core_lo, core_hi], with the remaining nodes spread over each tail at
 * geometrically growing spacing starting from the core spacing.
 */
inline WealthGrid graded_wealth_grid(double x_lo, double x_hi, double core_lo, double core_hi,
                                     std::size_t total, std::size_t core_nodes) {
    core_lo = std::max(core_lo, x_lo);
    core_hi = std::min(core_hi, x_hi);
    if (!(core_hi > core_lo) || core_nodes < 2 || core_nodes >= total)
        return WealthGrid::uniform(x_lo, x_hi, total);
    const double h = (core_hi - core_lo) / static_cast<double>(core_nodes - 1);
    const double len_lo = core_lo - x_lo;
    const double len_hi = x_hi - core_hi;
    std::size_t rest = total - core_nodes;
    std::size_t n_lo = 0;
    std::size_t n_hi = 0;
    if (len_lo > 0.0 && len_hi > 0.0) {
        n_lo = std::max<std::size_t>(1, rest / 2);
        n_hi = rest - n_lo;
        if (n_hi == 0) return WealthGrid::uniform(x_lo, x_hi, total);
    } else if (len_lo > 0.0) {
        n_lo = rest;
    } else if (len_hi > 0.0) {
        n_hi = rest;
    } else {
        return WealthGrid::uniform(x_lo, x_hi, total);
    }
    // offsets d_1 < ... < d_m with d_m = len and d_j - d_{j-1} = h g^j
    auto tail = [h](double len, std::size_t m) {
        std::vector<double> d(m);
        if (len <= h * static_cast<double>(m)) {
            for (std::size_t j = 0; j < m; ++j) d[j] = len * static_cast<double>(j + 1) / static_cast<double>(m);
            return d;
        }
        auto reach = [&](double g) {
            double acc = 0.0;
            double step = h;
            for (std::size_t j = 0; j < m; ++j) {
                step *= g;
                acc += step;
                if (acc > len) break;
            }
            return acc;
        };
        double lo = 1.0;
        double hi = 2.0;
        while (reach(hi) < len) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (reach(mid) < len) lo = mid;
            else hi = mid;
        }
        double acc = 0.0;
        double step = h;
        for (std::size_t j = 0; j < m; ++j) {
            step *= hi;
            acc += step;
            d[j] = acc;
        }
        const double scale = len / acc;
        for (double& x : d) x *= scale;
        d.back() = len;
        return d;
    };
    std::vector<double> pts;
    pts.reserve(total);
    const auto d_lo = tail(len_lo, n_lo);
    for (std::size_t j = n_lo; j-- > 0;) pts.push_back(core_lo - d_lo[j]);
    for (std::size_t i = 0; i < core_nodes; ++i) pts.push_back(core_lo + h * static_cast<double>(i));
    pts.back() = core_hi;
    for (double d : tail(len_hi, n_hi)) pts.push_back(core_hi + d);
    pts.front() = x_lo;
    pts.back() = x_hi;
    return WealthGrid(std::move(pts));
}

/// Everything needed to instantiate the mining game at a given time order.
struct GameSpec {
    ModelParams params;
    UtilitySpec utility;
    int horizon = 300;
    int order = 1;
    std::size_t wealth_nodes = 512;
    std::size_t action_nodes = 128;
    std::optional<double> x_min;  ///< unset: 0.1% quantile of mu0 minus c*L*T
    std::optional<double> x_max;  ///< unset: 99.9% quantile of mu0 plus K*r
    bool graded = true;           ///< dense core plus stretched tails; false = uniform
    double core_fraction = 0.8;   ///< share of wealth nodes in the core
    std::optional<double> core_min;  ///< unset: min(0.1% quantile, 0) - 2r
    std::optional<double> core_max;  ///< unset: 99.9% quantile + 8r
    InitialWealthSpec initial;
    OptimizerConfig optimizer;
    double clamp_threshold = 1e-6;

    void validate() const {
        params.validate();
        utility.validate();
        initial.validate();
        if (horizon < 1) throw ParameterError("time: T must be >= 1");
        if (order < 0) throw ParameterError("time: n must be >= 0");
        if (wealth_nodes < 2) throw ParameterError("grid: wealth_nodes must be >= 2");
        if (action_nodes < 2) throw ParameterError("grid: action_nodes must be >= 2");
        if (x_min && x_max && !(*x_max > *x_min)) throw ParameterError("grid: x_max must exceed x_min");
        if (!(clamp_threshold >= 0.0)) throw ParameterError("forward: clamp_threshold must be >= 0");
        if (!(core_fraction > 0.0 && core_fraction <= 1.0))
            throw ParameterError("grid: core_fraction must lie in (0, 1]");
        if (!(optimizer.golden_width > 0.0)) throw ParameterError("optimizer: golden_width must be > 0");
        if (!(optimizer.drift_safety > 0.0)) throw ParameterError("optimizer: drift_safety must be > 0");
    }

    GameSpec with_order(int n) const {
        GameSpec s = *this;
        s.order = n;
        return s;
    }
};

/// A fully discretized instance of the mining game.
struct CryptoGame {
    ModelParams params;
    UtilitySpec utility;
    TimeGrid time;
    WealthGrid wealth;
    ActionGrid actions;
    std::vector<double> phi;  ///< terminal utility on the wealth grid
    std::vector<double> mu0;  ///< initial masses on the wealth grid
    OptimizerConfig optimizer;
    double clamp_threshold = 1e-6;
    InitialWealthSpec initial;  ///< continuous law behind mu0, used for agent sampling

    std::size_t steps() const noexcept { return time.steps(); }

    /// Scheme 2 kernels bound to a mean hash-rate flow.
    auto kernels(const HashRateFlow& eta) const {
        return [this, &eta](std::size_t k) { return CryptoStepKernel(params, time.order(), eta[k]); };
    }
    /// Scheme 1 kernels bound to a measure-valued flow.
    auto kernels(std::span<const DiscreteControlMeasure> flow) const {
        return [this, flow](std::size_t k) { return CryptoStepKernel(params, time.order(), flow[k]); };
    }
};

inline CryptoGame make_game(const GameSpec& spec) {
    spec.validate();
    const TimeGrid time(spec.order, spec.horizon);
    const double x_lo = spec.x_min.value_or(spec.initial.quantile(0.001) -
                                            spec.params.c * spec.params.L * spec.horizon);
    const double x_hi = spec.x_max.value_or(spec.initial.quantile(0.999) +
                                            static_cast<double>(time.steps()) * spec.params.r);
    if (!(x_hi > x_lo)) throw ParameterError("grid: resolved x_max must exceed x_min");
    const double core_lo = spec.core_min.value_or(std::min(spec.initial.quantile(0.001), 0.0) - 2.0 * spec.params.r);
    const double core_hi = spec.core_max.value_or(spec.initial.quantile(0.999) + 8.0 * spec.params.r);
    const auto core_nodes = static_cast<std::size_t>(std::lround(spec.core_fraction * static_cast<double>(spec.wealth_nodes)));
    WealthGrid wealth = spec.graded
                            ? graded_wealth_grid(x_lo, x_hi, core_lo, core_hi, spec.wealth_nodes, core_nodes)
                            : WealthGrid::uniform(x_lo, x_hi, spec.wealth_nodes);
    ActionGrid actions = ActionGrid::uniform(spec.params.L, spec.action_nodes);
    std::vector<double> phi = utility_on_grid(spec.utility, wealth);
    std::vector<double> mu0 = project_initial_wealth(spec.initial, wealth);
    return CryptoGame{spec.params,        spec.utility,        time, std::move(wealth), std::move(actions),
                      std::move(phi),     std::move(mu0),      spec.optimizer,          spec.clamp_threshold,
                      spec.initial};
}

/// Mean-preserving projection of point masses onto the action grid.
inline std::vector<double> project_on_actions(const ActionGrid& grid, std::span<const double> actions,
                                              std::span<const double> masses) {
    const WealthGrid axis(std::vector<double>(grid.points().begin(), grid.points().end()));
    std::vector<double> w(grid.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        deposit(w, axis, actions[i], masses[i]);
        total += masses[i];
    }
    for (double& x : w) x /= total;
    return w;
}

}  // namespace mfgjump
