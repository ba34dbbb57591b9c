// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfpo/hamiltonian.hpp"

namespace dfpo {

// ---------------------------------------------------------------------------
// Cost functionals
// ---------------------------------------------------------------------------

enum class CurveMode { Spline, Polyline };

struct SurfaceCostOptions {
    CurveMode mode = CurveMode::Spline;
    std::size_t min_samples = 1024;
    double tolerance = 1e-6;
    bool check_self_intersection = false;
};

struct SurfaceCostDetail {
    double cost = 0.0;
    double perimeter = 0.0;
    double signed_area = 0.0;
    std::size_t samples = 0;
    bool self_intersecting = false;
};

/// Perimeter over square root of enclosed area for the closed curve through
/// the control points. control_points is interleaved (x0, y0, x1, y1, ...).
/// Spline mode uses the periodic cubic spline with uniform parameterisation;
/// polyline mode uses the straight-edged polygon.
SurfaceCostDetail surface_cost_detail(std::span<const double> control_points,
                                      const SurfaceCostOptions& options = {});

double surface_cost(std::span<const double> control_points, const SurfaceCostOptions& options = {});

/// Tensor-product natural bicubic spline refinement of an m x m row-major
/// grid onto ((m-1)*fine_factor + 1)^2 nodes over the same square.
std::vector<double> grid_refine(std::span<const double> coarse, std::size_t m, std::size_t fine_factor);

struct GridCostDetail {
    double cost = 0.0;
    double variation = 0.0;  // integral of |grad f|
    double mass = 0.0;       // integral of max(f, 0)
    std::size_t fine_size = 0;
};

/// Integral of |grad f_fine| divided by sqrt of the integral of max(f_fine, 0)
/// on the unit square.
GridCostDetail grid_cost_detail(std::span<const double> coarse, std::size_t m, std::size_t fine_factor);
double grid_cost(std::span<const double> coarse, std::size_t m, std::size_t fine_factor);

/// Same functional evaluated directly on an already refined n x n field.
GridCostDetail fine_field_cost(std::span<const double> fine, std::size_t n);

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

enum class EnvKind { Surface, Grid, Quadratic };

std::string to_string(EnvKind kind);
EnvKind parse_env_kind(const std::string& name);

struct EnvSpec {
    EnvKind kind = EnvKind::Quadratic;
    std::size_t state_dim = 2;
    std::size_t horizon = 20;
    double dt = 0.01;

    std::size_t control_points = 16;  // surface: state_dim = 2 * control_points
    std::size_t grid_size = 8;        // grid: state_dim = grid_size^2
    std::size_t fine_factor = 4;
    std::vector<double> quadratic_matrix;  // empty means identity

    double radius_min = 0.5;
    double radius_max = 1.5;
    double value_min = 0.5;
    double value_max = 1.5;

    ScoreForm score_form = ScoreForm::Legendre;
    std::uint64_t seed = 0;

    /// Fills state_dim from the kind-specific size fields and checks
    /// consistency. Throws ConfigError.
    void validate();
};

EnvSpec default_spec(EnvKind kind);

/// Black-box environment: cost functional F, initial distribution rho_0 and
/// the score of a phase point. Never exposes the gradient of F.
class Environment {
public:
    explicit Environment(EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    std::size_t state_dim() const { return spec_.state_dim; }
    std::size_t phase_dim() const { return 2 * spec_.state_dim; }

    double cost(std::span<const double> s) const;
    double score(const PhasePoint& x) const;
    CostFunctional cost_functional() const;

    /// Draw from rho_0. The adjoint of the returned point is zero.
    PhasePoint sample_rho0(std::mt19937_64& rng) const;

    /// Analytic Hamiltonian of the quadratic environment; nullopt otherwise.
    std::optional<AnalyticHamiltonian> oracle() const;

private:
    EnvSpec spec_;
    std::optional<AnalyticHamiltonian> quadratic_;
};

struct QueryResult {
    std::vector<PhasePoint> starts;
    std::vector<Trajectory> trajectories;
    /// failures[i] is set when trajectory i could not be produced; that
    /// trajectory is then left empty.
    std::vector<std::optional<std::string>> failures;

    bool ok() const;
    std::size_t failure_count() const;
};

/// Roll out the policy from every start for H points and score each point.
/// Starts are processed in parallel; results are ordered by start index.
QueryResult query(const Environment& env, const DynamicsOperator& policy, std::span<const PhasePoint> starts);

/// Single-threaded reference for query().
QueryResult query_serial(const Environment& env, const DynamicsOperator& policy,
                         std::span<const PhasePoint> starts);

}  // namespace dfpo
