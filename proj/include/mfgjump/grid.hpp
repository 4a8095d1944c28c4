#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgjump/error.hpp"

namespace mfgjump {

/**
 * Dyadic time discretization of the horizon [0, T].
 *
 * Step length is 1/2^n and there are K = T * 2^n decision steps, indexed
 * k = 0, ..., K-1; states live on k = 0, ..., K.
 */
class TimeGrid {
public:
    TimeGrid(int order, int horizon) : order_(order), horizon_(horizon) {
        if (order < 0 || order > 30) throw GridError("TimeGrid: order must be in [0, 30]");
        if (horizon < 1) throw GridError("TimeGrid: horizon must be >= 1");
    }

    int order() const noexcept { return order_; }
    int horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept {
        return static_cast<std::size_t>(horizon_) << static_cast<unsigned>(order_);
    }
    double dt() const noexcept { return std::ldexp(1.0, -order_); }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt(); }

private:
    int order_;
    int horizon_;
};

/// Location of a coordinate on a grid: lower node and weight on the upper node.
struct GridCell {
    std::size_t lo = 0;
    double w_hi = 0.0;    ///< in [0, 1]; mass fraction assigned to node lo + 1
    bool clamped = false; ///< coordinate was outside [x_min, x_max]
};

/**
 * Strictly increasing wealth coordinates.
 *
 * Uniformly spaced grids are detected at construction and located in O(1);
 * other grids use a bucket index (or binary search when the spacing ratio
 * is extreme).
 */
class WealthGrid {
public:
    explicit WealthGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw GridError("WealthGrid: need at least 2 points");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (!std::isfinite(points_[i])) throw GridError("WealthGrid: non-finite point");
            if (i > 0 && !(points_[i] > points_[i - 1]))
                throw GridError("WealthGrid: points must be strictly increasing");
        }
        const double span = points_.back() - points_.front();
        spacing_ = span / static_cast<double>(points_.size() - 1);
        uniform_ = true;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double expect = points_.front() + spacing_ * static_cast<double>(i);
            if (std::abs(points_[i] - expect) > 1e-12 * std::max(1.0, std::abs(span))) {
                uniform_ = false;
                break;
            }
        }
        inv_gap_.resize(points_.size() - 1);
        for (std::size_t i = 0; i + 1 < points_.size(); ++i) inv_gap_[i] = 1.0 / (points_[i + 1] - points_[i]);
        if (!uniform_) build_buckets();
    }

    static WealthGrid uniform(double x_min, double x_max, std::size_t count) {
        if (count < 2) throw GridError("WealthGrid: need at least 2 points");
        if (!(x_max > x_min)) throw GridError("WealthGrid: x_max must exceed x_min");
        std::vector<double> pts(count);
        const double h = (x_max - x_min) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i) pts[i] = x_min + h * static_cast<double>(i);
        pts.back() = x_max;
        return WealthGrid(std::move(pts));
    }

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const noexcept { return points_[i]; }
    double x_min() const noexcept { return points_.front(); }
    double x_max() const noexcept { return points_.back(); }
    std::span<const double> points() const noexcept { return points_; }
    bool is_uniform() const noexcept { return uniform_; }

    GridCell locate(double x) const noexcept {
        const std::size_t n = points_.size();
        if (!(x > points_.front())) return {0, 0.0, x < points_.front()};
        if (!(x < points_.back())) return {n - 2, 1.0, x > points_.back()};
        std::size_t lo;
        if (uniform_) {
            lo = static_cast<std::size_t>((x - points_.front()) / spacing_);
            lo = std::min(lo, n - 2);
            // rounding in the division can land one cell off
            if (x < points_[lo]) --lo;
            else if (x >= points_[lo + 1] && lo + 2 < n) ++lo;
        } else if (!bucket_.empty()) {
            auto b = static_cast<std::size_t>((x - points_.front()) / bucket_width_);
            lo = bucket_[std::min(b, bucket_.size() - 1)];
            while (lo + 2 < n && x >= points_[lo + 1]) ++lo;
            while (lo > 0 && x < points_[lo]) --lo;
        } else {
            auto it = std::upper_bound(points_.begin(), points_.end(), x);
            lo = static_cast<std::size_t>(it - points_.begin()) - 1;
            lo = std::min(lo, n - 2);
        }
        return {lo, std::clamp((x - points_[lo]) * inv_gap_[lo], 0.0, 1.0), false};
    }

    /// Same result as locate(x), found by walking from the cell `hint`.
    GridCell locate_from(double x, std::size_t hint) const noexcept {
        const std::size_t n = points_.size();
        if (!(x > points_.front())) return {0, 0.0, x < points_.front()};
        if (!(x < points_.back())) return {n - 2, 1.0, x > points_.back()};
        std::size_t lo = std::min(hint, n - 2);
        while (lo > 0 && x < points_[lo]) --lo;
        while (lo + 2 < n && x >= points_[lo + 1]) ++lo;
        return {lo, std::clamp((x - points_[lo]) * inv_gap_[lo], 0.0, 1.0), false};
    }

private:
    // Bucket b covers [x_min + b w, x_min + (b+1) w) and stores the cell of its
    // left edge; with w at most the smallest spacing a lookup walks <= 1 cell.
    void build_buckets() {
        double min_gap = points_.back() - points_.front();
        for (std::size_t i = 1; i < points_.size(); ++i) min_gap = std::min(min_gap, points_[i] - points_[i - 1]);
        const double span = points_.back() - points_.front();
        constexpr double max_buckets = 1 << 22;
        if (span / min_gap > max_buckets) return;  // binary search fallback
        bucket_width_ = min_gap;
        const auto count = static_cast<std::size_t>(span / min_gap) + 1;
        bucket_.resize(count);
        std::size_t lo = 0;
        for (std::size_t b = 0; b < count; ++b) {
            const double left = points_.front() + bucket_width_ * static_cast<double>(b);
            while (lo + 2 < points_.size() && left >= points_[lo + 1]) ++lo;
            bucket_[b] = static_cast<std::uint32_t>(lo);
        }
    }

    std::vector<double> points_;
    std::vector<double> inv_gap_;
    double spacing_ = 0.0;
    bool uniform_ = false;
    double bucket_width_ = 0.0;
    std::vector<std::uint32_t> bucket_;
};

/// Action coordinates on [0, L]; first point 0, last point L.
class ActionGrid {
public:
    explicit ActionGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw GridError("ActionGrid: need at least 2 points");
        if (points_.front() != 0.0) throw GridError("ActionGrid: first point must be 0");
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i] > points_[i - 1]))
                throw GridError("ActionGrid: points must be strictly increasing");
        if (!std::isfinite(points_.back())) throw GridError("ActionGrid: non-finite bound");
    }

    static ActionGrid uniform(double upper, std::size_t count) {
        if (!(upper > 0.0)) throw GridError("ActionGrid: L must be positive");
        if (count < 2) throw GridError("ActionGrid: need at least 2 points");
        std::vector<double> pts(count);
        for (std::size_t i = 0; i < count; ++i)
            pts[i] = upper * static_cast<double>(i) / static_cast<double>(count - 1);
        pts.back() = upper;
        return ActionGrid(std::move(pts));
    }

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const noexcept { return points_[i]; }
    double upper() const noexcept { return points_.back(); }
    std::span<const double> points() const noexcept { return points_; }

private:
    std::vector<double> points_;
};

/// Dense row-major (time x wealth) table. The tag keeps value, policy and
/// mass tables from being mixed up.
template <class Tag>
class GridTable {
public:
    GridTable() = default;
    GridTable(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<double> row(std::size_t k) noexcept { return {data_.data() + k * cols_, cols_}; }
    std::span<const double> row(std::size_t k) const noexcept {
        return {data_.data() + k * cols_, cols_};
    }
    double& operator()(std::size_t k, std::size_t i) noexcept { return data_[k * cols_ + i]; }
    double operator()(std::size_t k, std::size_t i) const noexcept { return data_[k * cols_ + i]; }

    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const GridTable&, const GridTable&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using ValueTable = GridTable<struct ValueTag>;
using PolicyTable = GridTable<struct PolicyTag>;
using MassTable = GridTable<struct MassTag>;

inline double interp_at(std::span<const double> row, const GridCell& c) noexcept {
    return row[c.lo] + c.w_hi * (row[c.lo + 1] - row[c.lo]);
}

/// Piecewise-linear read of a grid row at x, clamped to the boundary values.
inline double interp_value(std::span<const double> row, const WealthGrid& grid, double x) {
    return interp_at(row, grid.locate(x));
}

/**
 * Deposit `mass` at coordinate x by splitting it between the two neighbouring
 * nodes so that the mass-weighted mean of the receiving nodes equals x.
 * Coordinates outside the grid go entirely to the nearest boundary node.
 * Returns the amount of mass that had to be clamped.
 */
inline double deposit(std::span<double> row, const WealthGrid& grid, double x, double mass) {
    const GridCell c = grid.locate(x);
    const double up = mass * c.w_hi;
    row[c.lo + 1] += up;
    row[c.lo] += mass - up;
    return c.clamped ? mass : 0.0;
}

}  // namespace mfgjump
