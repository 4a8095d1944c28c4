#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgjump/error.hpp"
#include "mfgjump/grid.hpp"

namespace mfgjump {

/// Physical constants of the mining game.
struct ModelParams {
    double c = 1.0;     ///< marginal electricity cost per unit hash rate per unit time
    double r = 1.0;     ///< block reward
    double M = 1000.0;  ///< population scale
    double eps = 0.0;   ///< intensity regularization
    double L = 10.0;    ///< upper bound on the hash rate

    void validate() const {
        if (!(c > 0.0)) throw ParameterError("model: c must be > 0");
        if (!(r > 0.0)) throw ParameterError("model: r must be > 0");
        if (!(M > 0.0)) throw ParameterError("model: M must be > 0");
        if (!(eps >= 0.0)) throw ParameterError("model: eps must be >= 0");
        if (!(L > 0.0) || !std::isfinite(L)) throw ParameterError("model: L must be > 0");
    }
};

/// How the reference agent's jump probability sees the population.
enum class Scheme {
    measure = 1,  ///< integrate the intensity against the control distribution
    mean = 2,     ///< evaluate the intensity at the mean control
};

/// Regularized block-win intensity a / (a + hM + eps), zero at a = 0.
inline double lambda_eps(double a, double h, const ModelParams& p) noexcept {
    if (!(a > 0.0)) return 0.0;
    return a / (a + h * p.M + p.eps);
}

/// d/da of lambda_eps on a > 0.
inline double lambda_eps_da(double a, double h, const ModelParams& p) noexcept {
    if (!(a > 0.0)) a = 0.0;
    const double hm = h * p.M + p.eps;
    if (hm == 0.0) return 0.0;
    const double den = a + hm;
    return hm / (den * den);
}

/**
 * Finitely supported distribution of population hash rates.
 *
 * Usually built on ActionGrid points; any support is accepted.
 */
class DiscreteControlMeasure {
public:
    DiscreteControlMeasure(std::vector<double> support, std::vector<double> weights)
        : support_(std::move(support)), weights_(std::move(weights)) {
        if (support_.empty() || support_.size() != weights_.size())
            throw ParameterError("control measure: support and weights must be non-empty and equal length");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw ParameterError("control measure: negative weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ParameterError("control measure: weights must sum to 1");
    }

    static DiscreteControlMeasure dirac(double h) { return {{h}, {1.0}}; }

    static DiscreteControlMeasure on_grid(const ActionGrid& grid, std::vector<double> weights) {
        return {std::vector<double>(grid.points().begin(), grid.points().end()), std::move(weights)};
    }

    std::span<const double> support() const noexcept { return support_; }
    std::span<const double> weights() const noexcept { return weights_; }

    double mean() const noexcept {
        double m = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) m += support_[i] * weights_[i];
        return m;
    }

private:
    std::vector<double> support_;
    std::vector<double> weights_;
};

/// Scheme 2: one-step win probability lambda(a, eta_bar) / 2^n.
inline double jump_probability(double a, double eta_bar, int order, const ModelParams& p) noexcept {
    return std::ldexp(lambda_eps(a, eta_bar, p), -order);
}

/// Scheme 1: one-step win probability (1/2^n) * integral of lambda(a, h) against the measure.
inline double jump_probability(double a, const DiscreteControlMeasure& eta, int order,
                               const ModelParams& p) noexcept {
    double acc = 0.0;
    const auto s = eta.support();
    const auto w = eta.weights();
    for (std::size_t i = 0; i < s.size(); ++i) acc += w[i] * lambda_eps(a, s[i], p);
    return std::ldexp(acc, -order);
}

inline double jump_probability(double a, double flow_entry, int order, const ModelParams& p,
                               Scheme scheme) {
    if (scheme == Scheme::measure) return jump_probability(a, DiscreteControlMeasure::dirac(flow_entry), order, p);
    return jump_probability(a, flow_entry, order, p);
}

/// Wealth after one step: (won the block, did not win).
inline std::pair<double, double> step_destinations(double x, double a, int order,
                                                   const ModelParams& p) noexcept {
    const double down = x + (-p.c * std::ldexp(1.0, -order)) * a;
    return {down + p.r, down};
}

/// Terminal utility of wealth.
struct UtilitySpec {
    enum class Kind { crra_sqrt, crra, constant, table };

    Kind kind = Kind::crra_sqrt;
    double gamma = 0.5;          ///< CRRA relative risk aversion, in (0, 1)
    double value = 0.0;          ///< constant utility level
    std::vector<double> table_x; ///< custom table support (strictly increasing)
    std::vector<double> table_y;

    static UtilitySpec crra_sqrt() { return {}; }
    static UtilitySpec crra(double g) {
        UtilitySpec u;
        u.kind = Kind::crra;
        u.gamma = g;
        return u;
    }
    static UtilitySpec constant(double v) {
        UtilitySpec u;
        u.kind = Kind::constant;
        u.value = v;
        return u;
    }
    static UtilitySpec table(std::vector<double> x, std::vector<double> y) {
        UtilitySpec u;
        u.kind = Kind::table;
        u.table_x = std::move(x);
        u.table_y = std::move(y);
        return u;
    }

    void validate() const {
        if (kind == Kind::crra && !(gamma > 0.0 && gamma < 1.0))
            throw ParameterError("utility: CRRA gamma must lie in (0, 1)");
        if (kind == Kind::table) {
            if (table_x.size() < 2 || table_x.size() != table_y.size())
                throw ParameterError("utility: table needs >= 2 (x, y) pairs");
            for (std::size_t i = 1; i < table_x.size(); ++i)
                if (!(table_x[i] > table_x[i - 1]))
                    throw ParameterError("utility: table x must be strictly increasing");
        }
    }

    bool strictly_increasing() const {
        switch (kind) {
            case Kind::crra_sqrt:
            case Kind::crra: return true;
            case Kind::constant: return false;
            case Kind::table:
                for (std::size_t i = 1; i < table_y.size(); ++i)
                    if (!(table_y[i] > table_y[i - 1])) return false;
                return true;
        }
        return false;
    }
};

// Negative wealth is clamped to zero for the CRRA kinds.
inline double utility_eval(const UtilitySpec& u, double x) {
    switch (u.kind) {
        case UtilitySpec::Kind::crra_sqrt: return 2.0 * std::sqrt(std::max(x, 0.0));
        case UtilitySpec::Kind::crra: {
            const double e = 1.0 - u.gamma;
            return std::pow(std::max(x, 0.0), e) / e;
        }
        case UtilitySpec::Kind::constant: return u.value;
        case UtilitySpec::Kind::table: {
            const auto& xs = u.table_x;
            if (x < xs.front() || x > xs.back())
                throw ParameterError("utility: x = " + std::to_string(x) + " outside table support");
            const WealthGrid g(xs);
            return interp_value(u.table_y, g, x);
        }
    }
    return 0.0;
}

inline std::vector<double> utility_on_grid(const UtilitySpec& u, const WealthGrid& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = utility_eval(u, grid[i]);
    return out;
}

/**
 * One-step transition model of the mining game at a fixed population flow
 * entry. Wealth moves to x - c a dt + r with the win probability and to
 * x - c a dt otherwise.
 */
class CryptoStepKernel {
public:
    CryptoStepKernel(const ModelParams& p, int order, double eta_bar)
        : p_(p), dt_(std::ldexp(1.0, -order)), eta_bar_(eta_bar) {}
    CryptoStepKernel(const ModelParams& p, int order, const DiscreteControlMeasure& measure)
        : p_(p), dt_(std::ldexp(1.0, -order)), eta_bar_(measure.mean()), measure_(&measure) {}

    double jump_size() const noexcept { return p_.r; }
    double drift_per_action() const noexcept { return -p_.c * dt_; }

    // dt_ is a power of two, so these products match the ldexp-based free functions bit for bit
    double jump_probability(double a) const noexcept {
        if (!measure_) return lambda_eps(a, eta_bar_, p_) * dt_;
        double acc = 0.0;
        const auto s = measure_->support();
        const auto w = measure_->weights();
        for (std::size_t i = 0; i < s.size(); ++i) acc += w[i] * lambda_eps(a, s[i], p_);
        return acc * dt_;
    }

    double jump_probability_da(double a) const noexcept {
        if (!measure_) return lambda_eps_da(a, eta_bar_, p_) * dt_;
        double acc = 0.0;
        const auto s = measure_->support();
        const auto w = measure_->weights();
        for (std::size_t i = 0; i < s.size(); ++i) acc += w[i] * lambda_eps_da(a, s[i], p_);
        return acc * dt_;
    }

private:
    ModelParams p_;
    double dt_;
    double eta_bar_;
    const DiscreteControlMeasure* measure_ = nullptr;
};

}  // namespace mfgjump
