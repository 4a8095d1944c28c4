#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "mfgjump/error.hpp"
#include "mfgjump/grid.hpp"
#include "mfgjump/parallel.hpp"

namespace mfgjump {

/**
 * One-step transition model seen by the dynamic-programming engine.
 *
 * From wealth x under action a the state moves to x + s*a + r with
 * probability p(a) and to x + s*a otherwise, where s = drift_per_action()
 * and r = jump_size(). The engine exploits the affine drift to locate the
 * kinks of the interpolated objective.
 */
template <class K>
concept OneStepKernel = requires(const K& k, double a) {
    { k.jump_size() } -> std::convertible_to<double>;
    { k.drift_per_action() } -> std::convertible_to<double>;
    { k.jump_probability(a) } -> std::convertible_to<double>;
    { k.jump_probability_da(a) } -> std::convertible_to<double>;
};

/// Optional per-step reward hook r(x, a) with its action derivative.
template <class K>
concept HasRunningReward = requires(const K& k, double x, double a) {
    { k.running_reward(x, a) } -> std::convertible_to<double>;
    { k.running_reward_da(x, a) } -> std::convertible_to<double>;
};

/// Produces the kernel for decision step k.
template <class F>
concept KernelSequence = requires(const F& f, std::size_t k) {
    { f(k) } -> OneStepKernel;
};

/// Per-step population mean hash rate.
class HashRateFlow {
public:
    HashRateFlow() = default;
    explicit HashRateFlow(std::vector<double> values) : values_(std::move(values)) {
        for (double v : values_)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("HashRateFlow: entries must be finite and >= 0");
    }
    static HashRateFlow constant(std::size_t steps, double value) {
        return HashRateFlow(std::vector<double>(steps, value));
    }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }
    std::span<const double> values() const noexcept { return values_; }

    double min() const noexcept {
        return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
    }
    double max() const noexcept {
        return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
    }

    friend bool operator==(const HashRateFlow&, const HashRateFlow&) = default;

private:
    std::vector<double> values_;
};

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ParameterError("sup_distance: length mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// Action search settings for the Bellman maximization.
struct OptimizerConfig {
    enum class Refine {
        none,             ///< grid scan only
        golden_section,   ///< golden-section search around the best grid point
        piecewise_exact,  ///< exact maximization over the smooth pieces around the best grid point
    };
    Refine refine = Refine::piecewise_exact;
    double golden_width = 1e-6;  ///< golden-section stop width, as a fraction of L
    double drift_safety = 1.0;   ///< reject when c*L*dt > drift_safety * (x_max - x_min)
    unsigned threads = 0;        ///< 0 = hardware concurrency
};

struct BellmanRow {
    std::vector<double> values;
    std::vector<double> actions;
};

namespace detail {

template <OneStepKernel K>
double running_reward(const K& kernel, double x, double a) {
    if constexpr (HasRunningReward<K>) return kernel.running_reward(x, a);
    else return 0.0;
}

template <OneStepKernel K>
double running_reward_da(const K& kernel, double x, double a) {
    if constexpr (HasRunningReward<K>) return kernel.running_reward_da(x, a);
    else return 0.0;
}

/// Expected continuation value of action a at wealth x.
template <OneStepKernel K>
double one_step_objective(std::span<const double> v_next, const WealthGrid& grid, const K& kernel,
                          double x, double a) {
    const double down = x + kernel.drift_per_action() * a;
    const double up = down + kernel.jump_size();
    const double p = kernel.jump_probability(a);
    const double v_dn = interp_value(v_next, grid, down);
    const double v_up = interp_value(v_next, grid, up);
    return v_dn + p * (v_up - v_dn) + running_reward(kernel, x, a);
}

inline double cell_slope(std::span<const double> v, const WealthGrid& grid, double y) {
    const GridCell c = grid.locate(y);
    if (c.clamped) return 0.0;
    return (v[c.lo + 1] - v[c.lo]) / (grid[c.lo + 1] - grid[c.lo]);
}

// Action values in (lo, hi) at which base + s*a crosses a grid node.
inline void append_crossings(const WealthGrid& grid, double base, double s, double lo, double hi,
                             std::vector<double>& out) {
    if (s == 0.0) return;
    const double y0 = std::min(base + s * lo, base + s * hi);
    const double y1 = std::max(base + s * lo, base + s * hi);
    const auto pts = grid.points();
    auto it = std::upper_bound(pts.begin(), pts.end(), y0);
    for (; it != pts.end() && *it < y1; ++it) {
        const double a = (*it - base) / s;
        if (a > lo && a < hi) out.push_back(a);
    }
}

/**
 * Maximize the objective over [lo, hi]. Between consecutive kinks the
 * interpolated continuation values are affine in a, so the objective is
 * smooth there; its local maxima are roots of the derivative, bracketed by
 * sampling and polished with TOMS 748. Candidates are visited in increasing order, so ties go to
 * the smaller action.
 */
template <OneStepKernel K>
std::pair<double, double> maximize_piecewise(std::span<const double> v_next, const WealthGrid& grid,
                                             const K& kernel, double x, double lo, double hi) {
    const double s = kernel.drift_per_action();
    const double r = kernel.jump_size();
    thread_local std::vector<double> knots;
    thread_local std::vector<double> candidates;
    knots.assign({lo, hi});
    append_crossings(grid, x, s, lo, hi, knots);
    append_crossings(grid, x + r, s, lo, hi, knots);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    candidates.assign(knots.begin(), knots.end());
    constexpr int samples = 8;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        const double u = knots[j];
        const double w = knots[j + 1];
        const double mid = 0.5 * (u + w);
        const double sl_dn = cell_slope(v_next, grid, x + s * mid);
        const double sl_up = cell_slope(v_next, grid, x + s * mid + r);
        auto deriv = [&](double a) {
            const double down = x + s * a;
            const double p = kernel.jump_probability(a);
            const double gap = interp_value(v_next, grid, down + r) - interp_value(v_next, grid, down);
            return s * (sl_dn + p * (sl_up - sl_dn)) + kernel.jump_probability_da(a) * gap +
                   running_reward_da(kernel, x, a);
        };
        double a_prev = u;
        double d_prev = deriv(u);
        for (int m = 1; m <= samples; ++m) {
            const double a_cur = (m == samples) ? w : u + (w - u) * m / samples;
            const double d_cur = deriv(a_cur);
            if (d_prev > 0.0 && d_cur <= 0.0) {
                if (d_cur == 0.0) {
                    candidates.push_back(a_cur);
                } else {
                    std::uintmax_t max_iter = 200;
                    const auto [left, right] = boost::math::tools::toms748_solve(
                        deriv, a_prev, a_cur, d_prev, d_cur, boost::math::tools::eps_tolerance<double>(), max_iter);
                    // keep the endpoint where the derivative is still positive
                    candidates.push_back(deriv(right) > 0.0 ? right : left);
                }
            }
            a_prev = a_cur;
            d_prev = d_cur;
        }
    }
    std::sort(candidates.begin(), candidates.end());
    double best_a = candidates.front();
    double best_v = one_step_objective(v_next, grid, kernel, x, best_a);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double val = one_step_objective(v_next, grid, kernel, x, candidates[i]);
        if (val > best_v) {
            best_v = val;
            best_a = candidates[i];
        }
    }
    return {best_a, best_v};
}

template <OneStepKernel K>
std::pair<double, double> maximize_golden(std::span<const double> v_next, const WealthGrid& grid,
                                          const K& kernel, double x, double lo, double hi,
                                          double width) {
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo;
    double b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = one_step_objective(v_next, grid, kernel, x, c);
    double fd = one_step_objective(v_next, grid, kernel, x, d);
    while (b - a > width) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = one_step_objective(v_next, grid, kernel, x, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = one_step_objective(v_next, grid, kernel, x, d);
        }
    }
    const double m = 0.5 * (a + b);
    return {m, one_step_objective(v_next, grid, kernel, x, m)};
}

template <OneStepKernel K>
void check_drift(const K& kernel, const WealthGrid& grid, const ActionGrid& actions,
                 const OptimizerConfig& opt) {
    const double shift = std::abs(kernel.drift_per_action()) * actions.upper();
    if (shift > (grid.x_max() - grid.x_min()) * opt.drift_safety)
        throw GridError("bellman_step: drift at a = L (" + std::to_string(shift) +
                        ") exceeds the wealth grid extent; grid too coarse");
}

/// Per-step quantities shared by every node: action shifts and win probabilities.
struct ActionScan {
    std::vector<double> shift;
    std::vector<double> prob;

    template <OneStepKernel K>
    ActionScan(const K& kernel, const ActionGrid& actions) : shift(actions.size()), prob(actions.size()) {
        const double s = kernel.drift_per_action();
        for (std::size_t j = 0; j < actions.size(); ++j) {
            shift[j] = s * actions[j];
            prob[j] = kernel.jump_probability(actions[j]);
        }
    }
};

template <OneStepKernel K>
std::pair<double, double> best_action(std::span<const double> v_next, const WealthGrid& grid,
                                      const ActionGrid& actions, const K& kernel, const ActionScan& scan,
                                      const OptimizerConfig& opt, double x) {
    const double r = kernel.jump_size();
    // same arithmetic as one_step_objective; cells are tracked incrementally
    GridCell c_dn = grid.locate(x + scan.shift[0]);
    GridCell c_up = grid.locate(x + scan.shift[0] + r);
    std::size_t best_j = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < actions.size(); ++j) {
        const double down = x + scan.shift[j];
        c_dn = grid.locate_from(down, c_dn.lo);
        c_up = grid.locate_from(down + r, c_up.lo);
        const double v_dn = interp_at(v_next, c_dn);
        const double v_up = interp_at(v_next, c_up);
        double val = v_dn + scan.prob[j] * (v_up - v_dn);
        if constexpr (HasRunningReward<K>) val += kernel.running_reward(x, actions[j]);
        if (val > best_v) {
            best_v = val;
            best_j = j;
        }
    }
    double best_a = actions[best_j];
    if (opt.refine == OptimizerConfig::Refine::none) return {best_a, best_v};

    const double lo = actions[best_j == 0 ? 0 : best_j - 1];
    const double hi = actions[std::min(best_j + 1, actions.size() - 1)];
    const auto [a, v] =
        opt.refine == OptimizerConfig::Refine::golden_section
            ? maximize_golden(v_next, grid, kernel, x, lo, hi, opt.golden_width * actions.upper())
            : maximize_piecewise(v_next, grid, kernel, x, lo, hi);
    if (v > best_v || (v == best_v && a < best_a)) return {a, v};
    return {best_a, best_v};
}

}  // namespace detail

/// Bellman update of one time step, written into caller-provided rows.
template <OneStepKernel K>
void bellman_step_into(std::span<const double> v_next, const K& kernel, const WealthGrid& grid,
                       const ActionGrid& actions, const OptimizerConfig& opt,
                       std::span<double> v_out, std::span<double> a_out) {
    if (v_next.size() != grid.size() || v_out.size() != grid.size() || a_out.size() != grid.size())
        throw GridError("bellman_step: row sizes must match the wealth grid");
    detail::check_drift(kernel, grid, actions, opt);
    const detail::ActionScan scan(kernel, actions);
    parallel_for(grid.size(), opt.threads, [&](std::size_t i) {
        const auto [a, v] = detail::best_action(v_next, grid, actions, kernel, scan, opt, grid[i]);
        v_out[i] = v;
        a_out[i] = a;
    });
}

/**
 * v_k(x) = max_a [ p(a) v_{k+1}(x + s a + r) + (1 - p(a)) v_{k+1}(x + s a) ]
 * with the maximizer (smallest on ties) in the returned action row.
 */
template <OneStepKernel K>
BellmanRow bellman_step(std::span<const double> v_next, const K& kernel, const WealthGrid& grid,
                        const ActionGrid& actions, const OptimizerConfig& opt = {}) {
    BellmanRow out{std::vector<double>(grid.size()), std::vector<double>(grid.size())};
    bellman_step_into(v_next, kernel, grid, actions, opt, out.values, out.actions);
    return out;
}

struct BackwardResult {
    ValueTable values;   ///< (K+1) x |grid|, row K is the terminal utility
    PolicyTable policy;  ///< K x |grid|
};

template <KernelSequence F>
BackwardResult backward_induction(const F& kernel_at, std::size_t steps, std::span<const double> phi,
                                  const WealthGrid& grid, const ActionGrid& actions,
                                  const OptimizerConfig& opt = {}) {
    if (phi.size() != grid.size()) throw GridError("backward_induction: terminal row size mismatch");
    for (double v : phi)
        if (!std::isfinite(v)) throw GridError("backward_induction: terminal utility not finite");
    BackwardResult out{ValueTable(steps + 1, grid.size()), PolicyTable(steps, grid.size())};
    std::copy(phi.begin(), phi.end(), out.values.row(steps).begin());
    for (std::size_t k = steps; k-- > 0;) {
        const auto kernel = kernel_at(k);
        const ValueTable& vt = out.values;
        bellman_step_into(vt.row(k + 1), kernel, grid, actions, opt, out.values.row(k), out.policy.row(k));
    }
    return out;
}

/// Value of following a fixed policy (grid-node actions, interpolated continuation).
template <KernelSequence F>
ValueTable evaluate_policy(const F& kernel_at, const PolicyTable& policy, std::span<const double> phi,
                           const WealthGrid& grid) {
    if (phi.size() != grid.size() || (!policy.empty() && policy.cols() != grid.size()))
        throw GridError("evaluate_policy: shape mismatch");
    const std::size_t steps = policy.rows();
    ValueTable values(steps + 1, grid.size());
    std::copy(phi.begin(), phi.end(), values.row(steps).begin());
    for (std::size_t k = steps; k-- > 0;) {
        const auto kernel = kernel_at(k);
        const auto next = std::as_const(values).row(k + 1);
        for (std::size_t i = 0; i < grid.size(); ++i)
            values(k, i) = detail::one_step_objective(next, grid, kernel, grid[i], policy(k, i));
    }
    return values;
}

struct DistributionFlow {
    MassTable mu;                     ///< (K+1) x |grid| probability masses
    std::vector<double> control_mean; ///< K induced mean actions
    double clamped_mass = 0.0;        ///< cumulative mass pushed past the grid boundary
};

/**
 * Propagate the state distribution forward under a policy. Each node's mass
 * moves to the two step destinations, and each destination is split between
 * its neighbouring nodes preserving the first moment.
 */
template <KernelSequence F>
DistributionFlow kolmogorov_forward(const F& kernel_at, const PolicyTable& policy,
                                    std::span<const double> mu0, const WealthGrid& grid,
                                    double clamp_threshold = 1e-6) {
    if (mu0.size() != grid.size() || (!policy.empty() && policy.cols() != grid.size()))
        throw GridError("kolmogorov_forward: shape mismatch");
    double total0 = 0.0;
    for (double m : mu0) {
        if (!(m >= 0.0)) throw ParameterError("kolmogorov_forward: negative initial mass");
        total0 += m;
    }
    if (std::abs(total0 - 1.0) > 1e-12) throw ParameterError("kolmogorov_forward: mu0 must sum to 1");

    const std::size_t steps = policy.rows();
    DistributionFlow out{MassTable(steps + 1, grid.size()), std::vector<double>(steps, 0.0), 0.0};
    std::copy(mu0.begin(), mu0.end(), out.mu.row(0).begin());
    for (std::size_t k = 0; k < steps; ++k) {
        const auto kernel = kernel_at(k);
        const double s = kernel.drift_per_action();
        const double r = kernel.jump_size();
        auto next = out.mu.row(k + 1);
        double mean = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double m = out.mu(k, i);
            if (m == 0.0) continue;
            const double a = policy(k, i);
            mean += a * m;
            const double down = grid[i] + s * a;
            const double m_up = m * kernel.jump_probability(a);
            out.clamped_mass += deposit(next, grid, down + r, m_up);
            out.clamped_mass += deposit(next, grid, down, m - m_up);
        }
        out.control_mean[k] = mean;
        double total = 0.0;
        for (double m : next) total += m;
        if (std::abs(total - 1.0) > 1e-12)
            throw std::logic_error("kolmogorov_forward: mass not conserved at step " + std::to_string(k + 1));
        if (out.clamped_mass > clamp_threshold)
            throw BoundaryMassError(out.clamped_mass, clamp_threshold);
    }
    return out;
}

/// sup_k |eta_bar[k] - induced control mean[k]|.
inline double consistency_residual(const HashRateFlow& eta, const DistributionFlow& flow) {
    if (eta.size() != flow.control_mean.size())
        throw ParameterError("consistency_residual: length mismatch");
    return sup_distance(eta.values(), flow.control_mean);
}

}  // namespace mfgjump
