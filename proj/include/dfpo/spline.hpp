// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dfpo::spline {

/// Second derivatives of the closed (periodic) cubic spline through y with
/// unit knot spacing.
std::vector<double> periodic_moments(std::span<const double> y);

/// Second derivatives of the natural cubic spline through y (unit spacing,
/// zero curvature at both ends).
std::vector<double> natural_moments(std::span<const double> y);

/// Value on segment [i, i+1] at local coordinate u in [0, 1].
inline double segment_value(double y0, double y1, double m0, double m1, double u)
{
    const double v = 1.0 - u;
    return v * y0 + u * y1 + ((v * v * v - v) * m0 + (u * u * u - u) * m1) / 6.0;
}

/// d/du of segment_value.
inline double segment_slope(double y0, double y1, double m0, double m1, double u)
{
    const double v = 1.0 - u;
    return y1 - y0 + ((1.0 - 3.0 * v * v) * m0 + (3.0 * u * u - 1.0) * m1) / 6.0;
}

/// Natural cubic spline through y (knots 0..n-1) evaluated at (n-1)*factor+1
/// equally spaced points; knot values are reproduced exactly.
std::vector<double> refine_natural(std::span<const double> y, std::size_t factor);

}  // namespace dfpo::spline
