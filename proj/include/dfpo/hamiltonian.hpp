// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dfpo/diffcore.hpp"

namespace dfpo {

/// Extended state x = (s, p): state followed by adjoint of the same length.
struct PhasePoint {
    std::vector<double> x;

    PhasePoint() = default;
    PhasePoint(std::span<const double> s, std::span<const double> p);
    /// Takes ownership of a flat (s, p) vector; length must be even.
    static PhasePoint from_flat(std::vector<double> flat);

    std::size_t state_dim() const { return x.size() / 2; }
    std::size_t dim() const { return x.size(); }
    std::span<double> s() { return std::span<double>(x).first(state_dim()); }
    std::span<double> p() { return std::span<double>(x).last(state_dim()); }
    std::span<const double> s() const { return std::span<const double>(x).first(state_dim()); }
    std::span<const double> p() const { return std::span<const double>(x).last(state_dim()); }

    friend bool operator==(const PhasePoint&, const PhasePoint&) = default;
};

/// A scalar function on phase space with its gradient: the g in G = Id + dt*S*grad(g).
class ScoreField {
public:
    virtual ~ScoreField() = default;
    virtual std::size_t dim() const = 0;
    virtual double value(std::span<const double> x) const = 0;
    virtual void gradient(std::span<const double> x, std::span<double> out) const = 0;
};

/// ScoreField backed by a (copied) score network.
class NetScoreField final : public ScoreField {
public:
    explicit NetScoreField(ScoreNet net) : net_(std::move(net)) {}
    std::size_t dim() const override { return net_.input_dim(); }
    double value(std::span<const double> x) const override { return forward(net_, x); }
    void gradient(std::span<const double> x, std::span<double> out) const override;
    const ScoreNet& net() const { return net_; }

private:
    ScoreNet net_;
};

/// Closed-form reference Hamiltonians h(s, p) = 1/2 |p|^2 + V(s).
class AnalyticHamiltonian final : public ScoreField {
public:
    enum class Kind { FreeParticle, Harmonic, QuadraticPotential };

    static AnalyticHamiltonian free_particle(std::size_t state_dim);
    static AnalyticHamiltonian harmonic(std::size_t state_dim);
    /// V(s) = 1/2 s^T A s for a symmetric positive-definite A (row-major n x n).
    static AnalyticHamiltonian quadratic(std::vector<double> A, std::size_t state_dim);

    Kind kind() const { return kind_; }
    std::size_t state_dim() const { return n_; }
    std::size_t dim() const override { return 2 * n_; }
    double potential(std::span<const double> s) const;
    double value(std::span<const double> x) const override;
    void gradient(std::span<const double> x, std::span<double> out) const override;
    const std::vector<double>& matrix() const { return A_; }

private:
    AnalyticHamiltonian(Kind kind, std::size_t n, std::vector<double> A)
        : kind_(kind), n_(n), A_(std::move(A)) {}
    Kind kind_;
    std::size_t n_;
    std::vector<double> A_;
};

/// x -> x + dt * S * grad g(x).
struct DynamicsOperator {
    double dt = 0.0;
    std::shared_ptr<const ScoreField> score;
};

DynamicsOperator make_operator(double dt, std::shared_ptr<const ScoreField> score);
DynamicsOperator make_operator(double dt, const ScoreNet& net);

/// Multiplication by S = [[0, I], [-I, 0]]: (a, b) -> (b, -a).
std::vector<double> symplectic_apply(std::span<const double> grad);

PhasePoint step(const DynamicsOperator& op, const PhasePoint& x);

/// [x0, G(x0), ..., G^(H-1)(x0)].
std::vector<PhasePoint> rollout(const DynamicsOperator& op, const PhasePoint& x0, std::size_t horizon);

struct Trajectory {
    std::vector<PhasePoint> points;
    std::vector<double> scores;
};

/// Which closed form the environment reports as the score of (s, p).
enum class ScoreForm {
    Legendre,      // 1/2 |p|^2 + F(s)
    PaperPrinted,  // 1/2 |p|^2 - r(s, p) with r = 1/2 |p|^2 - F(s), i.e. F(s)
};

std::string to_string(ScoreForm form);
ScoreForm parse_score_form(const std::string& name);

using CostFunctional = std::function<double(std::span<const double>)>;

double score_energy(std::span<const double> s, std::span<const double> p, const CostFunctional& cost,
                    ScoreForm form = ScoreForm::Legendre);

/// Exact continuous-time flow of s' = dh/dp, p' = -dh/ds for time t.
PhasePoint analytic_flow(const AnalyticHamiltonian& h, const PhasePoint& x0, double t);

/// Central-difference gradient of a black-box cost, step h.
std::vector<double> finite_difference_gradient(const CostFunctional& cost, std::span<const double> s,
                                               double h = 1e-4);

double norm2(std::span<const double> v);

}  // namespace dfpo
