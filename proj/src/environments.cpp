// SPDX-License-Identifier: Apache-2.0
#include "dfpo/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dfpo/error.hpp"
#include "dfpo/spline.hpp"

namespace dfpo {

namespace {

constexpr double kMinArea = 1e-9;
constexpr double kMinMass = 1e-6;
constexpr std::size_t kMaxSamples = std::size_t{1} << 20;

struct CurveIntegrals {
    double perimeter;
    double signed_area;
};

// Composite Simpson on every spline segment with q (even) sub-intervals.
CurveIntegrals integrate_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                                const std::vector<double>& mx, const std::vector<double>& my,
                                std::size_t q)
{
    const std::size_t n = xs.size();
    const double h = 1.0 / static_cast<double>(q);
    double perimeter = 0.0;
    double area = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        double seg_len = 0.0;
        double seg_area = 0.0;
        for (std::size_t k = 0; k <= q; ++k) {
            const double u = static_cast<double>(k) * h;
            const double w = (k == 0 || k == q) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            const double x = spline::segment_value(xs[i], xs[j], mx[i], mx[j], u);
            const double y = spline::segment_value(ys[i], ys[j], my[i], my[j], u);
            const double dx = spline::segment_slope(xs[i], xs[j], mx[i], mx[j], u);
            const double dy = spline::segment_slope(ys[i], ys[j], my[i], my[j], u);
            seg_len += w * std::hypot(dx, dy);
            seg_area += w * (x * dy - y * dx);
        }
        perimeter += seg_len * h / 3.0;
        area += 0.5 * seg_area * h / 3.0;
    }
    return {perimeter, area};
}

bool segments_cross(double ax, double ay, double bx, double by, double cx, double cy, double dx, double dy)
{
    auto orient = [](double px, double py, double qx, double qy, double rx, double ry) {
        return (qx - px) * (ry - py) - (qy - py) * (rx - px);
    };
    const double o1 = orient(ax, ay, bx, by, cx, cy);
    const double o2 = orient(ax, ay, bx, by, dx, dy);
    const double o3 = orient(cx, cy, dx, dy, ax, ay);
    const double o4 = orient(cx, cy, dx, dy, bx, by);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

// Proper crossings between non-adjacent edges of a closed polygon.
bool polygon_self_intersects(const std::vector<double>& px, const std::vector<double>& py)
{
    const std::size_t n = px.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t i1 = (i + 1) % n;
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            const std::size_t j1 = (j + 1) % n;
            if (segments_cross(px[i], py[i], px[i1], py[i1], px[j], py[j], px[j1], py[j1])) return true;
        }
    }
    return false;
}

void check_finite(std::span<const double> v, const char* what)
{
    for (double x : v)
        if (!std::isfinite(x)) throw NumericalError(std::string(what) + " contains a non-finite value");
}

}  // namespace

SurfaceCostDetail surface_cost_detail(std::span<const double> control_points, const SurfaceCostOptions& options)
{
    if (control_points.size() % 2 != 0)
        throw ShapeError("surface state must hold interleaved 2-D points");
    const std::size_t n = control_points.size() / 2;
    const std::size_t min_points = options.mode == CurveMode::Spline ? 4 : 3;
    if (n < min_points)
        throw ShapeError("surface state needs at least " + std::to_string(min_points) + " control points");
    check_finite(control_points, "surface state");

    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = control_points[2 * i];
        ys[i] = control_points[2 * i + 1];
    }

    SurfaceCostDetail out;
    if (options.mode == CurveMode::Polyline) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            out.perimeter += std::hypot(xs[j] - xs[i], ys[j] - ys[i]);
            out.signed_area += 0.5 * (xs[i] * ys[j] - xs[j] * ys[i]);
        }
        out.samples = n;
        if (options.check_self_intersection) out.self_intersecting = polygon_self_intersects(xs, ys);
    } else {
        const auto mx = spline::periodic_moments(xs);
        const auto my = spline::periodic_moments(ys);
        std::size_t q = std::max<std::size_t>(2, (options.min_samples + n - 1) / n);
        q += q % 2;
        auto prev = integrate_spline(xs, ys, mx, my, q);
        for (;;) {
            const auto next = integrate_spline(xs, ys, mx, my, 2 * q);
            q *= 2;
            const bool converged = std::abs(next.perimeter - prev.perimeter) < options.tolerance
                                   && std::abs(next.signed_area - prev.signed_area) < options.tolerance;
            prev = next;
            if (converged || q * n >= kMaxSamples) break;
        }
        out.perimeter = prev.perimeter;
        out.signed_area = prev.signed_area;
        out.samples = q * n;
        if (options.check_self_intersection) {
            constexpr std::size_t per_segment = 8;
            std::vector<double> px, py;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = (i + 1) % n;
                for (std::size_t k = 0; k < per_segment; ++k) {
                    const double u = static_cast<double>(k) / per_segment;
                    px.push_back(spline::segment_value(xs[i], xs[j], mx[i], mx[j], u));
                    py.push_back(spline::segment_value(ys[i], ys[j], my[i], my[j], u));
                }
            }
            out.self_intersecting = polygon_self_intersects(px, py);
        }
    }

    const double area = std::abs(out.signed_area);
    if (area < kMinArea)
        throw DegenerateError("surface encloses no area (|area| = " + std::to_string(area) + ")");
    out.cost = out.perimeter / std::sqrt(area);
    return out;
}

double surface_cost(std::span<const double> control_points, const SurfaceCostOptions& options)
{
    return surface_cost_detail(control_points, options).cost;
}

std::vector<double> grid_refine(std::span<const double> coarse, std::size_t m, std::size_t fine_factor)
{
    if (m < 3) throw ShapeError("coarse grid must be at least 3 x 3");
    if (coarse.size() != m * m) throw ShapeError("coarse grid must hold m * m values");
    if (fine_factor < 2) throw ShapeError("fine factor must be at least 2");
    check_finite(coarse, "coarse grid");
    const std::size_t M = (m - 1) * fine_factor + 1;

    // rows first: m x M
    std::vector<double> rows(m * M);
    for (std::size_t k = 0; k < m; ++k) {
        const auto r = spline::refine_natural(coarse.subspan(k * m, m), fine_factor);
        std::copy(r.begin(), r.end(), rows.begin() + static_cast<std::ptrdiff_t>(k * M));
    }
    // then columns: M x M
    std::vector<double> fine(M * M);
    std::vector<double> column(m);
    for (std::size_t l = 0; l < M; ++l) {
        for (std::size_t k = 0; k < m; ++k) column[k] = rows[k * M + l];
        const auto c = spline::refine_natural(column, fine_factor);
        for (std::size_t i = 0; i < M; ++i) fine[i * M + l] = c[i];
    }
    return fine;
}

GridCostDetail fine_field_cost(std::span<const double> fine, std::size_t n)
{
    if (n < 2 || fine.size() != n * n) throw ShapeError("fine field must be n x n with n >= 2");
    const double h = 1.0 / static_cast<double>(n - 1);
    auto at = [&](std::size_t i, std::size_t j) { return fine[i * n + j]; };
    // first-order one-sided at the boundary, central inside
    auto diff = [&](std::size_t idx, auto&& value) {
        if (idx == 0) return (value(1) - value(0)) / h;
        if (idx == n - 1) return (value(n - 1) - value(n - 2)) / h;
        return (value(idx + 1) - value(idx - 1)) / (2.0 * h);
    };
    // trapezoid weights: each node carries the area of the cells around it
    auto weight = [&](std::size_t idx) { return (idx == 0 || idx == n - 1) ? 0.5 * h : h; };

    GridCostDetail out;
    out.fine_size = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double fx = diff(j, [&](std::size_t c) { return at(i, c); });
            const double fy = diff(i, [&](std::size_t r) { return at(r, j); });
            const double w = weight(i) * weight(j);
            out.variation += w * std::hypot(fx, fy);
            out.mass += w * std::max(at(i, j), 0.0);
        }
    }
    if (out.mass <= kMinMass)
        throw DegenerateError("fine field has non-positive integral (" + std::to_string(out.mass) + ")");
    out.cost = out.variation / std::sqrt(out.mass);
    return out;
}

GridCostDetail grid_cost_detail(std::span<const double> coarse, std::size_t m, std::size_t fine_factor)
{
    const auto fine = grid_refine(coarse, m, fine_factor);
    return fine_field_cost(fine, (m - 1) * fine_factor + 1);
}

double grid_cost(std::span<const double> coarse, std::size_t m, std::size_t fine_factor)
{
    return grid_cost_detail(coarse, m, fine_factor).cost;
}

std::string to_string(EnvKind kind)
{
    switch (kind) {
    case EnvKind::Surface:
        return "surface";
    case EnvKind::Grid:
        return "grid";
    case EnvKind::Quadratic:
        return "quadratic";
    }
    return "?";
}

EnvKind parse_env_kind(const std::string& name)
{
    if (name == "surface") return EnvKind::Surface;
    if (name == "grid") return EnvKind::Grid;
    if (name == "quadratic") return EnvKind::Quadratic;
    throw ConfigError("env.kind: unknown environment '" + name + "' (expected surface, grid or quadratic)");
}

void EnvSpec::validate()
{
    if (horizon < 1) throw ConfigError("env.steps must be at least 1");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw ConfigError("env.dt must be finite and non-negative");
    switch (kind) {
    case EnvKind::Surface:
        if (control_points < 4) throw ConfigError("env.control_points must be at least 4");
        state_dim = 2 * control_points;
        if (!(radius_min > 0.0) || !(radius_max >= radius_min))
            throw ConfigError("env.radius_min/radius_max must satisfy 0 < min <= max");
        break;
    case EnvKind::Grid:
        if (grid_size < 3) throw ConfigError("env.grid_size must be at least 3");
        if (fine_factor < 2) throw ConfigError("env.fine_factor must be at least 2");
        state_dim = grid_size * grid_size;
        if (!(value_max >= value_min)) throw ConfigError("env.value_min must not exceed env.value_max");
        break;
    case EnvKind::Quadratic:
        if (state_dim < 1) throw ConfigError("env.state_dim must be positive");
        if (!quadratic_matrix.empty()) {
            if (quadratic_matrix.size() != state_dim * state_dim)
                throw ConfigError("env.matrix must hold state_dim^2 entries");
            try {
                AnalyticHamiltonian::quadratic(quadratic_matrix, state_dim);
            } catch (const Error& e) {
                throw ConfigError(std::string("env.matrix: ") + e.what());
            }
        }
        break;
    }
}

EnvSpec default_spec(EnvKind kind)
{
    EnvSpec spec;
    spec.kind = kind;
    if (kind == EnvKind::Quadratic) {
        spec.state_dim = 2;
        spec.horizon = 10;
        spec.dt = 0.1;
    } else {
        spec.horizon = 20;
        spec.dt = 0.01;
    }
    spec.validate();
    return spec;
}

Environment::Environment(EnvSpec spec)
    : spec_(std::move(spec))
{
    spec_.validate();
    if (spec_.kind == EnvKind::Quadratic) {
        quadratic_ = spec_.quadratic_matrix.empty()
                         ? AnalyticHamiltonian::harmonic(spec_.state_dim)
                         : AnalyticHamiltonian::quadratic(spec_.quadratic_matrix, spec_.state_dim);
    }
}

double Environment::cost(std::span<const double> s) const
{
    if (s.size() != spec_.state_dim)
        throw ShapeError("state has length " + std::to_string(s.size()) + ", environment expects "
                         + std::to_string(spec_.state_dim));
    switch (spec_.kind) {
    case EnvKind::Surface:
        return surface_cost(s);
    case EnvKind::Grid:
        return grid_cost(s, spec_.grid_size, spec_.fine_factor);
    case EnvKind::Quadratic:
        return quadratic_->potential(s);
    }
    return 0.0;
}

double Environment::score(const PhasePoint& x) const
{
    if (x.dim() != phase_dim()) throw ShapeError("phase point does not match environment dimension");
    return score_energy(x.s(), x.p(), [this](std::span<const double> s) { return cost(s); }, spec_.score_form);
}

CostFunctional Environment::cost_functional() const
{
    return [this](std::span<const double> s) { return cost(s); };
}

PhasePoint Environment::sample_rho0(std::mt19937_64& rng) const
{
    const std::size_t n = spec_.state_dim;
    std::vector<double> s(n);
    switch (spec_.kind) {
    case EnvKind::Surface: {
        const std::size_t k = spec_.control_points;
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        std::uniform_real_distribution<double> radius(spec_.radius_min, spec_.radius_max);
        std::vector<double> angles(k);
        for (;;) {
            for (auto& a : angles) a = angle(rng);
            std::sort(angles.begin(), angles.end());
            if (std::adjacent_find(angles.begin(), angles.end()) == angles.end()) break;
        }
        for (std::size_t i = 0; i < k; ++i) {
            const double r = radius(rng);
            s[2 * i] = r * std::cos(angles[i]);
            s[2 * i + 1] = r * std::sin(angles[i]);
        }
        break;
    }
    case EnvKind::Grid: {
        std::uniform_real_distribution<double> value(spec_.value_min, spec_.value_max);
        for (auto& v : s) v = value(rng);
        break;
    }
    case EnvKind::Quadratic: {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& v : s) v = normal(rng);
        break;
    }
    }
    const std::vector<double> p(n, 0.0);
    return PhasePoint(s, p);
}

std::optional<AnalyticHamiltonian> Environment::oracle() const
{
    return quadratic_;
}

bool QueryResult::ok() const
{
    return failure_count() == 0;
}

std::size_t QueryResult::failure_count() const
{
    return static_cast<std::size_t>(std::count_if(failures.begin(), failures.end(),
                                                  [](const auto& f) { return f.has_value(); }));
}

namespace {

void run_one(const Environment& env, const DynamicsOperator& policy, const PhasePoint& start,
             Trajectory& traj, std::optional<std::string>& failure)
{
    try {
        if (start.dim() != env.phase_dim())
            throw ShapeError("start has dimension " + std::to_string(start.dim()) + ", environment expects "
                             + std::to_string(env.phase_dim()));
        Trajectory t;
        t.points = rollout(policy, start, env.spec().horizon);
        t.scores.reserve(t.points.size());
        for (const auto& pt : t.points) t.scores.push_back(env.score(pt));
        traj = std::move(t);
    } catch (const std::exception& e) {
        failure = e.what();
    }
}

QueryResult prepare(std::span<const PhasePoint> starts)
{
    QueryResult r;
    r.starts.assign(starts.begin(), starts.end());
    r.trajectories.resize(starts.size());
    r.failures.resize(starts.size());
    return r;
}

}  // namespace

QueryResult query(const Environment& env, const DynamicsOperator& policy, std::span<const PhasePoint> starts)
{
    auto r = prepare(starts);
    const auto n = static_cast<std::ptrdiff_t>(starts.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        run_one(env, policy, starts[k], r.trajectories[k], r.failures[k]);
    }
    return r;
}

QueryResult query_serial(const Environment& env, const DynamicsOperator& policy,
                         std::span<const PhasePoint> starts)
{
    auto r = prepare(starts);
    for (std::size_t i = 0; i < starts.size(); ++i)
        run_one(env, policy, starts[i], r.trajectories[i], r.failures[i]);
    return r;
}

}  // namespace dfpo
