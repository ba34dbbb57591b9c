// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfpo/diffcore.hpp"
#include "dfpo/environments.hpp"
#include "dfpo/error.hpp"

namespace dfpo {

// ---------------------------------------------------------------------------
// Stage schedules
// ---------------------------------------------------------------------------

enum class ScheduleMode { Budget, TheoryGeneral, TheorySpecial };

std::string to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(const std::string& name);

struct ScheduleParams {
    std::size_t total_episodes = 5000;  // Budget
    double epsilon = 0.5;               // Theory*
    double delta = 0.05;                // failure probability for the whole run
    std::size_t dim = 0;                // TheoryGeneral: phase-space dimension d
    double constant = 1.0;              // C in N_k = ceil(C * eps^-mu)
    std::size_t cap = 1'000'000;        // feasibility cap for theory modes
};

struct StageSchedule {
    ScheduleMode mode = ScheduleMode::Budget;
    std::vector<std::size_t> samples;  // samples[k-1] = N_k, k = 1..H-1
    std::vector<double> delta;         // delta[k-1] = delta / 3^(H-k)
    std::vector<std::string> warnings;

    std::size_t stages() const { return samples.size(); }
    std::size_t N(std::size_t k) const { return samples.at(k - 1); }
    std::size_t total_episodes() const;
};

/// Per-stage sample counts and confidence levels for a horizon of H steps.
/// Budget spreads total_episodes uniformly; the theory modes use
/// ceil(C * eps^-(2d+4)) or ceil(C * eps^-6), capped with a warning.
StageSchedule make_schedule(ScheduleMode mode, std::size_t horizon, const ScheduleParams& params);

// ---------------------------------------------------------------------------
// Replay memory
// ---------------------------------------------------------------------------

/// Samples contributed per start at stage k: one true label plus k-2
/// bootstrapped labels.
inline std::size_t samples_per_start(std::size_t k)
{
    return k >= 2 ? k - 1 : 1;
}

/// Closed-form memory size after completing stage k.
std::size_t expected_memory_size(const StageSchedule& schedule, std::size_t k);

/// Append-only store of labelled phase points. Appends happen one whole
/// stage at a time.
class ReplayMemory {
public:
    std::size_t size() const { return samples_.size(); }
    std::span<const LabeledSample> samples() const { return samples_; }
    std::size_t stages_completed() const { return stage_end_.size(); }

    /// Size of the memory right after stage k was appended.
    std::size_t size_after_stage(std::size_t k) const { return stage_end_.at(k - 1); }
    std::span<const LabeledSample> stage_samples(std::size_t k) const;

    void append_stage(std::vector<LabeledSample> batch);

    void save(const std::string& path) const;
    static ReplayMemory load(const std::string& path);

private:
    std::vector<LabeledSample> samples_;
    std::vector<std::size_t> stage_end_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct NetConfig {
    std::vector<std::size_t> hidden = {64, 64};
    Activation activation = Activation::Tanh;
    double init_scale = 1e-2;  // output-layer scale of the initial score g_0
    std::optional<double> weight_bound;

    std::vector<std::size_t> widths(std::size_t input_dim) const;
};

struct FitConfig {
    AdamConfig adam;
    std::size_t epochs = 50;
    double plateau = 1e-6;  // stop when the epoch loss changes by less than this
    double beta = 1.0;      // smooth-L1 threshold
    bool warm_start = true;
};

struct StageRecord {
    std::size_t stage = 0;
    std::size_t samples = 0;  // N_k
    double delta = 0.0;
    std::size_t memory_size = 0;
    std::vector<double> loss_curve;  // mean training loss per epoch
    double true_loss_before = 0.0;   // TrueScore subset, before fitting
    double true_loss_after = 0.0;
    double seconds = 0.0;
};

struct EpisodeRecord {
    std::size_t episode = 0;  // 1-based, in the order the episodes were drawn
    std::size_t stage = 0;    // the episode used the policy of stage - 1
    PhasePoint start;
    double terminal_cost = 0.0;
};

struct TrainHistory {
    std::vector<StageRecord> stages;
    std::vector<EpisodeRecord> episodes;
    /// policies[k] is g_{theta_k}; policies[0] is the random initial score.
    std::vector<ScoreNet> policies;
    double seconds = 0.0;
};

struct TrainResult {
    ScoreNet net;
    TrainHistory history;
    ReplayMemory memory;
};

/// Raised when a stage cannot complete; carries the stage index.
class StageError : public Error {
public:
    StageError(std::size_t stage, const std::string& what);
    std::size_t stage() const { return stage_; }

private:
    std::size_t stage_;
};

struct StageOutput {
    ScoreNet net;
    StageRecord record;
    std::vector<EpisodeRecord> episodes;
};

/// Starting points of stage k: N_k draws from rho_0, each from its own
/// stream of (seed, k, i).
std::vector<PhasePoint> stage_starts(const Environment& env, std::size_t k, std::size_t count, std::uint64_t seed);

/// Labelled samples contributed by one query at stage k under prev_net.
std::vector<LabeledSample> label_stage(std::size_t k, const QueryResult& result, const ScoreNet& prev_net);

/// Fit net to the whole memory with minibatch smooth-L1 regression.
std::vector<double> fit(ScoreNet& net, std::span<const LabeledSample> data, const FitConfig& cfg,
                        std::uint64_t shuffle_seed);

/// One iteration of the stage loop: query with G_{k-1}, extend memory,
/// fit g_k. On failure memory is left untouched.
StageOutput run_stage(std::size_t k, const ScoreNet& prev_net, ReplayMemory& memory, const Environment& env,
                      const StageSchedule& schedule, const NetConfig& net_cfg, const FitConfig& fit_cfg,
                      std::uint64_t seed);

using StageCallback = std::function<void(std::size_t stage, const ScoreNet& net, const TrainResult& so_far)>;

/// Where a resumed run picks up: the last finished stage, its score
/// network and the replay memory at that point.
struct ResumeState {
    std::size_t stage = 0;
    ScoreNet net;
    ReplayMemory memory;
};

TrainResult train(const EnvSpec& spec, const StageSchedule& schedule, const NetConfig& net_cfg,
                  const FitConfig& fit_cfg, std::uint64_t seed, const StageCallback& on_stage = {},
                  std::optional<ResumeState> resume = std::nullopt);

ScoreNet initial_score_net(const EnvSpec& spec, const NetConfig& net_cfg, std::uint64_t seed);

// Audits used by tests and diagnostics.

/// Max relative error between stored TrueScore labels and the environment
/// score recomputed at the same point.
double audit_true_labels(const ReplayMemory& memory, const Environment& env);

/// Max absolute difference between stored Bootstrapped labels and the
/// stage's previous policy evaluated at the same point.
double audit_bootstrapped_labels(const ReplayMemory& memory, const TrainHistory& history);

/// True when every recorded memory size equals the closed-form count.
bool audit_memory_sizes(const TrainHistory& history, const StageSchedule& schedule);

}  // namespace dfpo
