// SPDX-License-Identifier: Apache-2.0
#include "dfpo/hamiltonian.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "dfpo/error.hpp"

namespace dfpo {

namespace {

std::string describe(const PhasePoint& x)
{
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < x.x.size(); ++i) os << (i ? ", " : "") << x.x[i];
    os << ')';
    return os.str();
}

}  // namespace

PhasePoint::PhasePoint(std::span<const double> s, std::span<const double> p)
{
    if (s.size() != p.size())
        throw ShapeError("state and adjoint must have the same length");
    x.reserve(s.size() + p.size());
    x.insert(x.end(), s.begin(), s.end());
    x.insert(x.end(), p.begin(), p.end());
}

PhasePoint PhasePoint::from_flat(std::vector<double> flat)
{
    if (flat.size() % 2 != 0)
        throw ShapeError("phase point must have even length");
    PhasePoint pt;
    pt.x = std::move(flat);
    return pt;
}

void NetScoreField::gradient(std::span<const double> x, std::span<double> out) const
{
    value_and_grad_input(net_, x, out);
}

AnalyticHamiltonian AnalyticHamiltonian::free_particle(std::size_t state_dim)
{
    return {Kind::FreeParticle, state_dim, {}};
}

AnalyticHamiltonian AnalyticHamiltonian::harmonic(std::size_t state_dim)
{
    return {Kind::Harmonic, state_dim, {}};
}

AnalyticHamiltonian AnalyticHamiltonian::quadratic(std::vector<double> A, std::size_t n)
{
    if (A.size() != n * n)
        throw ShapeError("quadratic potential matrix must be n x n");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (A[i * n + j] != A[j * n + i])
                throw ConfigError("quadratic potential matrix is not symmetric");
    Eigen::Map<const Eigen::MatrixXd> M(A.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw ConfigError("quadratic potential matrix is not positive definite");
    return {Kind::QuadraticPotential, n, std::move(A)};
}

double AnalyticHamiltonian::potential(std::span<const double> s) const
{
    if (s.size() != n_) throw ShapeError("state length does not match Hamiltonian");
    switch (kind_) {
    case Kind::FreeParticle:
        return 0.0;
    case Kind::Harmonic: {
        double acc = 0.0;
        for (double v : s) acc += v * v;
        return 0.5 * acc;
    }
    case Kind::QuadraticPotential: {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) acc += s[i] * A_[i * n_ + j] * s[j];
        return 0.5 * acc;
    }
    }
    return 0.0;
}

double AnalyticHamiltonian::value(std::span<const double> x) const
{
    if (x.size() != 2 * n_) throw ShapeError("phase point length does not match Hamiltonian");
    double kinetic = 0.0;
    for (double v : x.subspan(n_)) kinetic += v * v;
    return 0.5 * kinetic + potential(x.first(n_));
}

void AnalyticHamiltonian::gradient(std::span<const double> x, std::span<double> out) const
{
    if (x.size() != 2 * n_ || out.size() != 2 * n_)
        throw ShapeError("phase point length does not match Hamiltonian");
    for (std::size_t i = 0; i < n_; ++i) {
        double ds = 0.0;
        if (kind_ == Kind::Harmonic) {
            ds = x[i];
        } else if (kind_ == Kind::QuadraticPotential) {
            for (std::size_t j = 0; j < n_; ++j) ds += A_[i * n_ + j] * x[j];
        }
        out[i] = ds;
        out[n_ + i] = x[n_ + i];
    }
}

DynamicsOperator make_operator(double dt, std::shared_ptr<const ScoreField> score)
{
    if (!(dt >= 0.0) || !std::isfinite(dt))
        throw ConfigError("time step must be finite and non-negative");
    if (!score) throw UsageError("dynamics operator needs a score field");
    return {dt, std::move(score)};
}

DynamicsOperator make_operator(double dt, const ScoreNet& net)
{
    return make_operator(dt, std::make_shared<NetScoreField>(net));
}

std::vector<double> symplectic_apply(std::span<const double> grad)
{
    if (grad.size() % 2 != 0)
        throw ShapeError("symplectic map needs an even-dimensional vector");
    const std::size_t n = grad.size() / 2;
    std::vector<double> out(grad.size());
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = grad[n + i];
        out[n + i] = -grad[i];
    }
    return out;
}

PhasePoint step(const DynamicsOperator& op, const PhasePoint& x)
{
    if (!op.score) throw UsageError("dynamics operator has no score field");
    if (x.dim() != op.score->dim())
        throw ShapeError("phase point has dimension " + std::to_string(x.dim()) + ", operator expects "
                         + std::to_string(op.score->dim()));
    std::vector<double> grad(x.dim());
    op.score->gradient(x.x, grad);
    for (double g : grad)
        if (!std::isfinite(g)) throw NumericalError("non-finite score gradient at " + describe(x));
    if (op.dt == 0.0) return x;
    const std::size_t n = x.state_dim();
    PhasePoint next = x;
    for (std::size_t i = 0; i < n; ++i) {
        next.x[i] += op.dt * grad[n + i];
        next.x[n + i] -= op.dt * grad[i];
    }
    return next;
}

std::vector<PhasePoint> rollout(const DynamicsOperator& op, const PhasePoint& x0, std::size_t horizon)
{
    if (horizon == 0) throw UsageError("rollout horizon must be at least 1");
    std::vector<PhasePoint> points;
    points.reserve(horizon);
    points.push_back(x0);
    for (std::size_t j = 1; j < horizon; ++j) {
        try {
            points.push_back(step(op, points.back()));
        } catch (const NumericalError& e) {
            throw NumericalError("rollout step " + std::to_string(j) + ": " + e.what());
        }
    }
    return points;
}

std::string to_string(ScoreForm form)
{
    return form == ScoreForm::Legendre ? "legendre" : "paper_printed";
}

ScoreForm parse_score_form(const std::string& name)
{
    if (name == "legendre") return ScoreForm::Legendre;
    if (name == "paper_printed") return ScoreForm::PaperPrinted;
    throw ConfigError("unknown score_form '" + name + "' (expected legendre or paper_printed)");
}

double score_energy(std::span<const double> s, std::span<const double> p, const CostFunctional& cost,
                    ScoreForm form)
{
    const double F = cost(s);
    if (form == ScoreForm::PaperPrinted) return F;
    double kinetic = 0.0;
    for (double v : p) kinetic += v * v;
    return 0.5 * kinetic + F;
}

PhasePoint analytic_flow(const AnalyticHamiltonian& h, const PhasePoint& x0, double t)
{
    const std::size_t n = h.state_dim();
    if (x0.state_dim() != n || x0.dim() != 2 * n)
        throw ShapeError("phase point dimension does not match Hamiltonian");
    PhasePoint out = x0;
    switch (h.kind()) {
    case AnalyticHamiltonian::Kind::FreeParticle:
        for (std::size_t i = 0; i < n; ++i) out.x[i] = x0.x[i] + t * x0.x[n + i];
        return out;
    case AnalyticHamiltonian::Kind::Harmonic: {
        const double c = std::cos(t);
        const double sn = std::sin(t);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = x0.x[i];
            const double p = x0.x[n + i];
            out.x[i] = c * s + sn * p;
            out.x[n + i] = -sn * s + c * p;
        }
        return out;
    }
    case AnalyticHamiltonian::Kind::QuadraticPotential: {
        // Decouple s'' = -A s into independent oscillators along A's eigenvectors.
        const auto N = static_cast<Eigen::Index>(n);
        Eigen::Map<const Eigen::MatrixXd> A(h.matrix().data(), N, N);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
        const Eigen::MatrixXd& Q = eig.eigenvectors();
        Eigen::Map<const Eigen::VectorXd> s0(x0.x.data(), N);
        Eigen::Map<const Eigen::VectorXd> p0(x0.x.data() + n, N);
        Eigen::VectorXd qs = Q.transpose() * s0;
        Eigen::VectorXd qp = Q.transpose() * p0;
        for (Eigen::Index i = 0; i < N; ++i) {
            const double w = std::sqrt(eig.eigenvalues()[i]);
            const double c = std::cos(w * t);
            const double sn = std::sin(w * t);
            const double a = qs[i];
            const double b = qp[i];
            qs[i] = c * a + sn * b / w;
            qp[i] = -w * sn * a + c * b;
        }
        Eigen::Map<Eigen::VectorXd>(out.x.data(), N) = Q * qs;
        Eigen::Map<Eigen::VectorXd>(out.x.data() + n, N) = Q * qp;
        return out;
    }
    }
    throw UsageError("analytic flow: unsupported Hamiltonian kind");
}

std::vector<double> finite_difference_gradient(const CostFunctional& cost, std::span<const double> s,
                                               double h)
{
    std::vector<double> probe(s.begin(), s.end());
    std::vector<double> g(s.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = cost(probe);
        probe[i] = orig - h;
        const double down = cost(probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double norm2(std::span<const double> v)
{
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace dfpo
