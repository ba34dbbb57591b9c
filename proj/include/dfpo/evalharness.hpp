// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dfpo/environments.hpp"
#include "dfpo/hamiltonian.hpp"
#include "dfpo/trainer.hpp"

namespace dfpo {

struct EvalReport {
    std::vector<double> terminal_costs;  // F(s_{H-1}) per successful episode
    double mean = 0.0;
    double std = 0.0;                    // sample standard deviation
    std::vector<double> mean_step_costs; // mean F(s_j) over episodes, j = 0..H-1
    std::uint64_t seed = 0;
    std::size_t failures = 0;

    /// Recompute mean and std from terminal_costs.
    void summarize();

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Roll out n_episodes fresh starts from rho_0 and record the terminal cost.
/// Episodes run in parallel; starts come from per-episode streams of seed.
EvalReport eval_terminal(const DynamicsOperator& policy, const Environment& env, std::size_t n_episodes,
                         std::uint64_t seed);

/// Single-threaded reference for eval_terminal().
EvalReport eval_terminal_serial(const DynamicsOperator& policy, const Environment& env, std::size_t n_episodes,
                                std::uint64_t seed);

/// Starting points used by eval_terminal for the given seed.
std::vector<PhasePoint> eval_starts(const Environment& env, std::size_t n_episodes, std::uint64_t seed);

struct PointwiseStats {
    double mean = 0.0;
    double standard_error = 0.0;
};

/// Monte-Carlo mean over n standard-normal starts (zero adjoint) of
/// |policy^(j)(X) - G^(j)(X)|, with G the oracle's explicit Euler map at the
/// policy's time step.
PointwiseStats pointwise_error_stats(const DynamicsOperator& policy, const AnalyticHamiltonian& oracle,
                                     std::size_t j, std::size_t n, std::uint64_t seed);

double pointwise_error(const DynamicsOperator& policy, const AnalyticHamiltonian& oracle, std::size_t j,
                       std::size_t n, std::uint64_t seed);

struct RegretCurve {
    std::vector<double> gaps;        // V(s^k) - V_{pi^k}(s^k), floored at 0
    std::vector<double> cumulative;  // running sum of gaps
    std::size_t clipped = 0;         // gaps that were negative before flooring
    double exponent = 0.0;           // log-log slope over the last half
    bool zero_regret = false;        // every gap is zero; exponent is meaningless

    friend bool operator==(const RegretCurve&, const RegretCurve&) = default;
};

/// Builds the cumulative curve and fitted growth exponent from raw gaps.
RegretCurve regret_from_gaps(std::vector<double> gaps);

/// Least-squares slope of log(cumulative[K-1]) against log(K) over the
/// last `fraction` of episodes.
double fit_growth_exponent(const std::vector<double>& cumulative, double fraction = 0.5);

/// Optimal value of the oracle environment from start x0: reward
/// 1/2|p|^2 - F(s) integrated along the exact flow over H*dt with step dt/100.
double oracle_value(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt, std::size_t horizon);

/// Value of one rollout of policy from x0: dt * sum_j (1/2|a_j|^2 - F(s_j)),
/// a_j = dg/dp at x_j.
double policy_value(const DynamicsOperator& policy, const Environment& env, const PhasePoint& x0);

/// Per-episode regret of a training run on an environment with an
/// analytic oracle. Throws UsageError for other environments.
RegretCurve regret_estimate(const TrainHistory& history, const Environment& env);

struct OrderDiagnostics {
    std::vector<double> step_sizes;
    std::vector<double> errors;  // |step(x0) - flow(x0, dt)| per step size
    std::vector<double> ratios;  // errors[i] / errors[i+1]
};

/// One-step error of the explicit Euler operator against the exact flow for
/// dt, dt/2, ... (halvings + 1 step sizes).
OrderDiagnostics integrator_order(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt,
                                  std::size_t halvings);

/// max_n |h(x_n) - h(x_0)| / |h(x_0)| along an H-point Euler rollout.
double energy_drift(const AnalyticHamiltonian& oracle, const PhasePoint& x0, double dt, std::size_t horizon);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

enum class ExportFormat { Csv, Json };

/// CSV columns: episode,terminal_cost,seed. Floats use 17 significant digits.
void export_report(const EvalReport& report, const std::string& path, ExportFormat format);
EvalReport import_report(const std::string& path, ExportFormat format);

/// CSV columns: episode,gap,cum_regret.
void export_regret(const RegretCurve& curve, const std::string& path, ExportFormat format);
RegretCurve import_regret(const std::string& path, ExportFormat format);

/// Per-stage summary (stage,samples,delta,memory_size,epochs,final_loss,
/// true_loss_before,true_loss_after,seconds) and per-episode terminal costs
/// (episode,stage,terminal_cost).
void export_history(const TrainHistory& history, const std::string& stages_path,
                    const std::string& episodes_path);

std::string format_double(double v);

}  // namespace dfpo
