#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "epiwane/error.hpp"

namespace epiwane {

/// Uniform grid t_i = i*dt, i = 0..size()-1, covering [0, horizon].
class TimeGrid {
public:
    TimeGrid() = default;

    TimeGrid(double dt, double horizon)
        : dt_(dt)
    {
        if (!(dt > 0) || !std::isfinite(dt))
            throw InvalidParameter("dt", "must be positive");
        if (!(horizon > 0) || !std::isfinite(horizon))
            throw InvalidParameter("horizon", "must be positive");
        const double steps = horizon / dt;
        const double rounded = std::round(steps);
        // horizons that are an integer multiple of dt (up to rounding) land exactly on the last point
        n_ = static_cast<std::size_t>(std::abs(steps - rounded) < 1e-9 * std::max(1.0, steps) ? rounded : std::ceil(steps)) + 1;
    }

    double dt() const noexcept { return dt_; }
    std::size_t size() const noexcept { return n_; }
    double at(std::size_t i) const noexcept { return static_cast<double>(i) * dt_; }
    double horizon() const noexcept { return at(n_ - 1); }

    /// Index of the grid point closest to t (clamped to the grid).
    std::size_t index_of(double t) const noexcept
    {
        if (t <= 0)
            return 0;
        auto i = static_cast<std::size_t>(std::llround(t / dt_));
        return i >= n_ ? n_ - 1 : i;
    }

    bool operator==(const TimeGrid& o) const noexcept { return dt_ == o.dt_ && n_ == o.n_; }

    /// Every `stride`-th point of this grid.
    TimeGrid coarsened(std::size_t stride) const
    {
        TimeGrid g;
        g.dt_ = dt_ * static_cast<double>(stride);
        g.n_ = (n_ - 1) / stride + 1;
        return g;
    }

private:
    double dt_ = 0.0;
    std::size_t n_ = 0;
};

/// Trapezoid weight of node j in the rule over [t_0, t_i].
inline double trapezoid_weight(std::size_t i, std::size_t j, double dt) noexcept
{
    if (i == 0)
        return 0.0;
    return (j == 0 || j == i) ? 0.5 * dt : dt;
}

/// Piecewise-linear interpolation of grid samples; constant extrapolation.
inline double interpolate(std::span<const double> values, const TimeGrid& grid, double t) noexcept
{
    if (t <= 0)
        return values.front();
    const double x = t / grid.dt();
    const auto m = static_cast<std::size_t>(x);
    if (m + 1 >= values.size())
        return values.back();
    const double a = x - static_cast<double>(m);
    return values[m] + a * (values[m + 1] - values[m]);
}

/// Running trapezoid integral of the piecewise-linear interpolant (exact for it).
inline std::vector<double> cumulative_trapezoid(std::span<const double> values, double dt)
{
    std::vector<double> c(values.size(), 0.0);
    for (std::size_t i = 1; i < values.size(); ++i)
        c[i] = c[i - 1] + 0.5 * dt * (values[i - 1] + values[i]);
    return c;
}

} // namespace epiwane
