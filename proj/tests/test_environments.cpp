// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dfpo/environments.hpp"
#include "dfpo/error.hpp"
#include "dfpo/rng.hpp"
#include "support.hpp"

using namespace dfpo;

namespace {

const double kTwoRootPi = 2.0 * std::sqrt(std::numbers::pi);

std::vector<double> circle(std::size_t n, double r = 1.0)
{
    std::vector<double> pts;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        pts.push_back(r * std::cos(t));
        pts.push_back(r * std::sin(t));
    }
    return pts;
}

// Independent dense evaluation of the grid functional on an n x n field over
// the unit square: trapezoid-weighted node sums, central differences inside,
// one-sided differences on the edges.
double brute_force_grid_cost(const std::vector<double>& f, std::size_t n)
{
    const double h = 1.0 / static_cast<double>(n - 1);
    auto at = [&](long i, long j) { return f[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)]; };
    auto weight = [&](long i) { return (i == 0 || i == static_cast<long>(n) - 1) ? 0.5 : 1.0; };
    auto diff = [&](long i, long j, bool along_rows) {
        const long N = static_cast<long>(n);
        const long k = along_rows ? i : j;
        auto v = [&](long kk) { return along_rows ? at(kk, j) : at(i, kk); };
        if (k == 0) return (v(1) - v(0)) / h;
        if (k == N - 1) return (v(N - 1) - v(N - 2)) / h;
        return (v(k + 1) - v(k - 1)) / (2 * h);
    };
    double tv = 0.0, mass = 0.0;
    for (long i = 0; i < static_cast<long>(n); ++i)
        for (long j = 0; j < static_cast<long>(n); ++j) {
            const double w = weight(i) * weight(j) * h * h;
            tv += w * std::hypot(diff(i, j, true), diff(i, j, false));
            mass += w * std::max(at(i, j), 0.0);
        }
    return tv / std::sqrt(mass);
}

}  // namespace

TEST_CASE("surface cost closed forms")
{
    SurfaceCostOptions poly;
    poly.mode = CurveMode::Polyline;
    const std::vector<double> square{0, 0, 1, 0, 1, 1, 0, 1};
    CHECK(std::abs(surface_cost(square, poly) - 4.0) <= 1e-12);
    const std::vector<double> rect{0, 0, 2, 0, 2, 1, 0, 1};
    CHECK(std::abs(surface_cost(rect, poly) - 6.0 / std::sqrt(2.0)) <= 1e-12);
    CHECK(surface_cost(rect, poly) == doctest::Approx(4.24264).epsilon(1e-5));

    SUBCASE("spline through 64 points of the unit circle")
    {
        const auto d = surface_cost_detail(circle(64));
        CHECK(std::abs(d.cost - kTwoRootPi) < 1e-3);
        CHECK(std::abs(d.cost - 3.54491) < 1e-3);
        CHECK(d.samples >= 1024);
        // doubling the quadrature density changes nothing at the reported precision
        SurfaceCostOptions dense;
        dense.min_samples = 2 * d.samples;
        CHECK(std::abs(surface_cost(circle(64), dense) - d.cost) < 1e-6);
    }
    SUBCASE("clockwise orientation gives the same cost")
    {
        auto c = circle(16);
        std::vector<double> rev;
        for (std::size_t i = c.size() / 2; i-- > 0;) {
            rev.push_back(c[2 * i]);
            rev.push_back(c[2 * i + 1]);
        }
        CHECK(surface_cost(rev) == doctest::Approx(surface_cost(c)).epsilon(1e-12));
    }
}

TEST_CASE("surface cost properties on random star polygons")
{
    Environment env(default_spec(EnvKind::Surface));
    for (std::uint64_t i = 0; i < 25; ++i) {
        auto rng = stream_rng(17, i);
        const auto x = env.sample_rho0(rng);
        const std::vector<double> s(x.s().begin(), x.s().end());
        const double c = surface_cost(s);
        CHECK(c >= kTwoRootPi - 5e-3);
        for (double lambda : {0.1, 3.7}) {
            auto scaled = s;
            for (auto& v : scaled) v *= lambda;
            CHECK(std::abs(surface_cost(scaled) - c) / c < 1e-6);
        }
    }
}

TEST_CASE("surface cost degenerate and self-intersecting curves")
{
    SurfaceCostOptions poly;
    poly.mode = CurveMode::Polyline;
    CHECK_THROWS_AS(surface_cost(std::vector<double>{0, 0, 1, 0, 2, 0, 3, 0}, poly), DegenerateError);

    // figure eight: lobes of opposite orientation and unequal size
    SurfaceCostOptions check;
    check.mode = CurveMode::Polyline;
    check.check_self_intersection = true;
    const std::vector<double> eight{0, 0, 2, 1, 2, -1, -1, 1, -1, -1};
    const auto d = surface_cost_detail(eight, check);
    CHECK(d.self_intersecting);
    CHECK(d.cost > 0.0);
    CHECK_FALSE(surface_cost_detail(std::vector<double>{0, 0, 1, 0, 1, 1, 0, 1}, check).self_intersecting);
}

TEST_CASE("grid refinement")
{
    SUBCASE("constants are reproduced")
    {
        const std::vector<double> coarse(16, 0.75);
        for (double v : grid_refine(coarse, 4, 3)) CHECK(v == doctest::Approx(0.75).epsilon(1e-14));
    }
    SUBCASE("coarse nodes are preserved exactly")
    {
        std::mt19937_64 rng(3);
        const std::size_t m = 6, ff = 4;
        const auto coarse = dfpo::test::normal_vector(rng, m * m);
        const auto fine = grid_refine(coarse, m, ff);
        const std::size_t M = (m - 1) * ff + 1;
        REQUIRE(fine.size() == M * M);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t l = 0; l < m; ++l) CHECK(fine[(k * ff) * M + l * ff] == coarse[k * m + l]);
    }
    SUBCASE("a linear field is reproduced at every fine node")
    {
        const std::size_t m = 5, ff = 4, M = (m - 1) * ff + 1;
        std::vector<double> coarse(m * m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) coarse[i * m + j] = static_cast<double>(j) / (m - 1);
        const auto fine = grid_refine(coarse, m, ff);
        double worst = 0.0;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < M; ++j)
                worst = std::max(worst, std::abs(fine[i * M + j] - static_cast<double>(j) / (M - 1)));
        CHECK(worst < 1e-10);
    }
    CHECK_THROWS(grid_refine(std::vector<double>(9, 1.0), 3, 1));
    CHECK_THROWS(grid_refine(std::vector<double>(4, 1.0), 2, 4));
}

TEST_CASE("grid cost")
{
    CHECK(grid_cost(std::vector<double>(25, 1.3), 5, 4) == doctest::Approx(0.0).epsilon(1e-12));

    SUBCASE("linear field at 65 x 65 fine nodes")
    {
        const std::size_t m = 5;
        std::vector<double> coarse(m * m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) coarse[i * m + j] = static_cast<double>(j) / (m - 1);
        const auto d = grid_cost_detail(coarse, m, 16);
        CHECK(d.fine_size >= 64);
        CHECK(std::abs(d.cost - std::sqrt(2.0)) < 2e-2);
    }
    SUBCASE("seeded random field matches the brute-force oracle")
    {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(0.5, 1.5);
        std::vector<double> coarse(25);
        for (auto& v : coarse) v = u(rng);
        const auto fine = grid_refine(coarse, 5, 4);
        const double oracle = brute_force_grid_cost(fine, 17);
        CHECK(std::abs(grid_cost(coarse, 5, 4) - oracle) < 1e-10);
        CHECK(std::abs(fine_field_cost(fine, 17).cost - oracle) < 1e-10);
    }
    SUBCASE("scaling the field by lambda scales the cost by sqrt(lambda)")
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.5, 1.5);
        std::vector<double> coarse(64);
        for (auto& v : coarse) v = u(rng);
        const double base = grid_cost(coarse, 8, 4);
        for (double lambda : {0.25, 4.0}) {
            auto scaled = coarse;
            for (auto& v : scaled) v *= lambda;
            CHECK(grid_cost(scaled, 8, 4) == doctest::Approx(std::sqrt(lambda) * base).epsilon(1e-12));
        }
    }
    SUBCASE("non-positive mass is degenerate")
    {
        CHECK_THROWS_AS(grid_cost(std::vector<double>(9, -1.0), 3, 2), DegenerateError);
        CHECK_THROWS_AS(grid_cost(std::vector<double>(9, 0.0), 3, 2), DegenerateError);
    }
}

TEST_CASE("quadratic cost")
{
    auto spec = default_spec(EnvKind::Quadratic);
    Environment id(spec);
    CHECK(id.cost(std::vector<double>{0.0, 0.0}) == 0.0);
    CHECK(id.cost(std::vector<double>{3.0, 4.0}) == 12.5);
    spec.quadratic_matrix = {2, 0, 0, 1};
    CHECK(Environment(spec).cost(std::vector<double>{1.0, 1.0}) == 1.5);
    spec.quadratic_matrix = {1, 3, 3, 1};
    CHECK_THROWS_AS(Environment{spec}, ConfigError);
    CHECK_THROWS_AS(id.cost(std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("initial distribution")
{
    SUBCASE("fixed seed twice gives identical samples")
    {
        for (auto kind : {EnvKind::Surface, EnvKind::Grid, EnvKind::Quadratic}) {
            Environment env(default_spec(kind));
            auto a = stream_rng(9, 1, 2);
            auto b = stream_rng(9, 1, 2);
            CHECK(env.sample_rho0(a) == env.sample_rho0(b));
        }
    }
    SUBCASE("surface samples are star-shaped")
    {
        Environment env(default_spec(EnvKind::Surface));
        for (std::uint64_t i = 0; i < 50; ++i) {
            auto rng = stream_rng(1, i);
            const auto x = env.sample_rho0(rng);
            CHECK(x.dim() == 64);
            double prev = -1.0;
            for (std::size_t k = 0; k < 16; ++k) {
                const double px = x.x[2 * k], py = x.x[2 * k + 1];
                const double r = std::hypot(px, py);
                CHECK(r >= 0.5);
                CHECK(r <= 1.5);
                double a = std::atan2(py, px);
                if (a < 0) a += 2.0 * std::numbers::pi;
                CHECK(a > prev);
                prev = a;
            }
            for (double p : x.p()) CHECK(p == 0.0);
        }
    }
    SUBCASE("grid entries average to one")
    {
        Environment env(default_spec(EnvKind::Grid));
        double sum = 0.0;
        std::size_t count = 0;
        for (std::uint64_t i = 0; i < 1000; ++i) {
            auto rng = stream_rng(2, i);
            const auto x = env.sample_rho0(rng);
            for (double v : x.s()) {
                CHECK(v >= 0.5);
                CHECK(v <= 1.5);
                sum += v;
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        CHECK(mean >= 0.95);
        CHECK(mean <= 1.05);
    }
}

TEST_CASE("environment specs")
{
    const auto surface = default_spec(EnvKind::Surface);
    CHECK(surface.horizon == 20);
    CHECK(surface.dt == 0.01);
    CHECK(surface.state_dim == 32);
    CHECK(default_spec(EnvKind::Grid).state_dim == 64);
    CHECK(parse_env_kind(to_string(EnvKind::Grid)) == EnvKind::Grid);
    CHECK_THROWS_AS(parse_env_kind("molecule"), ConfigError);
    auto bad = surface;
    bad.control_points = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_FALSE(Environment(surface).oracle().has_value());
}

TEST_CASE("query")
{
    SUBCASE("H = 1 returns the start and its score")
    {
        auto spec = default_spec(EnvKind::Grid);
        spec.horizon = 1;
        Environment env(spec);
        auto rng = stream_rng(4, 0);
        const std::vector<PhasePoint> starts{env.sample_rho0(rng)};
        std::mt19937_64 init(1);
        const auto r = query(env, make_operator(0.01, ScoreNet::random({128, 4, 1}, Activation::Tanh, init)), starts);
        REQUIRE(r.ok());
        REQUIRE(r.trajectories[0].points.size() == 1);
        CHECK(r.trajectories[0].points[0] == starts[0]);
        CHECK(r.trajectories[0].scores[0] == env.score(starts[0]));
    }
    SUBCASE("dt = 0 keeps every point at its start")
    {
        Environment env(default_spec(EnvKind::Surface));
        std::vector<PhasePoint> starts;
        for (std::uint64_t i = 0; i < 3; ++i) {
            auto rng = stream_rng(5, i);
            starts.push_back(env.sample_rho0(rng));
        }
        std::mt19937_64 init(1);
        const auto r = query(env, make_operator(0.0, ScoreNet::random({64, 4, 1}, Activation::Tanh, init)), starts);
        REQUIRE(r.ok());
        REQUIRE(r.trajectories.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            REQUIRE(r.trajectories[i].points.size() == 20);
            REQUIRE(r.trajectories[i].scores.size() == 20);
            for (std::size_t j = 0; j < 20; ++j) {
                CHECK(r.trajectories[i].points[j] == starts[i]);
                CHECK(r.trajectories[i].scores[j] == r.trajectories[i].scores[0]);
            }
        }
    }
    SUBCASE("quadratic env under the analytic operator")
    {
        auto spec = default_spec(EnvKind::Quadratic);
        Environment env(spec);
        const auto op = make_operator(spec.dt, std::make_shared<AnalyticHamiltonian>(*env.oracle()));
        std::vector<PhasePoint> starts;
        for (std::uint64_t i = 0; i < 8; ++i) {
            auto rng = stream_rng(6, i);
            starts.push_back(env.sample_rho0(rng));
        }
        const auto r = query(env, op, starts);
        REQUIRE(r.ok());
        for (const auto& t : r.trajectories) {
            for (std::size_t j = 0; j < t.points.size(); ++j) {
                const auto& x = t.points[j].x;
                const double e = 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
                CHECK(t.scores[j] == doctest::Approx(e).epsilon(1e-14));
            }
        }
        CHECK(r.trajectories.size() * r.trajectories[0].scores.size() == spec.horizon * starts.size());
    }
    SUBCASE("parallel query matches the serial reference bitwise")
    {
        Environment env(default_spec(EnvKind::Surface));
        std::vector<PhasePoint> starts;
        for (std::uint64_t i = 0; i < 12; ++i) {
            auto rng = stream_rng(7, i);
            starts.push_back(env.sample_rho0(rng));
        }
        std::mt19937_64 init(2);
        const auto op = make_operator(0.01, ScoreNet::random({64, 16, 1}, Activation::Tanh, init));
        const auto a = query(env, op, starts);
        const auto b = query_serial(env, op, starts);
        REQUIRE(a.trajectories.size() == b.trajectories.size());
        for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
            CHECK(a.trajectories[i].scores == b.trajectories[i].scores);
            for (std::size_t j = 0; j < a.trajectories[i].points.size(); ++j)
                CHECK(a.trajectories[i].points[j] == b.trajectories[i].points[j]);
        }
    }
    SUBCASE("failed trajectories are reported by index")
    {
        auto spec = default_spec(EnvKind::Grid);
        spec.value_min = -1.5;
        spec.value_max = -0.5;
        Environment env(spec);
        std::vector<PhasePoint> starts;
        for (std::uint64_t i = 0; i < 4; ++i) {
            auto rng = stream_rng(8, i);
            starts.push_back(env.sample_rho0(rng));
        }
        const auto r = query(env, make_operator(0.01, ScoreNet({128, 1})), starts);
        CHECK_FALSE(r.ok());
        CHECK(r.failure_count() == 4);
        REQUIRE(r.failures.size() == 4);
        CHECK(r.failures[2].has_value());
    }
}
