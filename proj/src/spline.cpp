// SPDX-License-Identifier: Apache-2.0
#include "dfpo/spline.hpp"

#include "dfpo/error.hpp"

namespace dfpo::spline {

namespace {

// Solves the constant-coefficient tridiagonal system
// rhs[i] = M[i-1] + 4 M[i] + M[i+1] (Thomas algorithm), no wrap-around.
std::vector<double> solve_141(std::vector<double> rhs)
{
    const std::size_t n = rhs.size();
    std::vector<double> c(n);
    double diag = 4.0;
    c[0] = 1.0 / diag;
    rhs[0] /= diag;
    for (std::size_t i = 1; i < n; ++i) {
        diag = 4.0 - c[i - 1];
        c[i] = 1.0 / diag;
        rhs[i] = (rhs[i] - rhs[i - 1]) / diag;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
    return rhs;
}

}  // namespace

std::vector<double> periodic_moments(std::span<const double> y)
{
    const std::size_t n = y.size();
    if (n < 3) throw ShapeError("periodic spline needs at least 3 knots");
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i)
        rhs[i] = 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]);

    // Cyclic tridiagonal system via Sherman-Morrison: A = T + u v^T with the
    // corner entries folded into a modified diagonal.
    const double gamma = -4.0;
    std::vector<double> b(n, 4.0);
    b[0] = 4.0 - gamma;
    b[n - 1] = 4.0 - 1.0 / gamma;

    auto solve = [&](std::vector<double> d) {
        std::vector<double> c(n);
        double diag = b[0];
        c[0] = 1.0 / diag;
        d[0] /= diag;
        for (std::size_t i = 1; i < n; ++i) {
            diag = b[i] - c[i - 1];
            c[i] = 1.0 / diag;
            d[i] = (d[i] - d[i - 1]) / diag;
        }
        for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
        return d;
    };

    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = 1.0;
    const auto x = solve(rhs);
    const auto z = solve(u);
    const double vx = x[0] + x[n - 1] / gamma;
    const double vz = z[0] + z[n - 1] / gamma;
    const double factor = vx / (1.0 + vz);
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = x[i] - factor * z[i];
    return m;
}

std::vector<double> natural_moments(std::span<const double> y)
{
    const std::size_t n = y.size();
    if (n < 2) throw ShapeError("natural spline needs at least 2 knots");
    std::vector<double> m(n, 0.0);
    if (n == 2) return m;
    std::vector<double> rhs(n - 2);
    for (std::size_t i = 1; i + 1 < n; ++i) rhs[i - 1] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
    const auto inner = solve_141(std::move(rhs));
    for (std::size_t i = 0; i < inner.size(); ++i) m[i + 1] = inner[i];
    return m;
}

std::vector<double> refine_natural(std::span<const double> y, std::size_t factor)
{
    if (factor == 0) throw ShapeError("refinement factor must be positive");
    const std::size_t n = y.size();
    const auto m = natural_moments(y);
    const std::size_t fine = (n - 1) * factor + 1;
    std::vector<double> out(fine);
    for (std::size_t j = 0; j < fine; ++j) {
        std::size_t seg = j / factor;
        std::size_t rem = j % factor;
        if (seg == n - 1) {
            seg = n - 2;
            rem = factor;
        }
        if (rem == 0) {
            out[j] = y[seg];
            continue;
        }
        if (rem == factor) {
            out[j] = y[seg + 1];
            continue;
        }
        const double u = static_cast<double>(rem) / static_cast<double>(factor);
        out[j] = segment_value(y[seg], y[seg + 1], m[seg], m[seg + 1], u);
    }
    return out;
}

}  // namespace dfpo::spline
