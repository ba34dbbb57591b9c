// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dfpo::cli {

// Process exit statuses.
enum Exit : int {
    kOk = 0,
    kRuntime = 1,    // a training stage or rollout failed
    kUsage = 2,      // bad config, flags or arguments
    kCorrupt = 3,    // unreadable or corrupt checkpoint
    kThreshold = 4,  // a diagnostic threshold was violated
};

/// Apply DFPO_THREADS (0 or unset = OpenMP default). Throws ConfigError on a
/// malformed value.
void apply_thread_env();

struct TrainOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool resume = false;
};

/// Train from a config file. Writes stage_<k>.ckpt after every stage,
/// final.ckpt, memory.bin, config.echo and the history CSVs into out_dir.
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::string ckpt_path;
    std::size_t episodes = 200;
    std::optional<std::uint64_t> seed;  // defaults to the seed echoed in the checkpoint
    std::optional<std::string> csv_path;  // defaults to <ckpt>.eval.csv
    bool json = false;
};

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

/// One measured quantity against its threshold.
struct Check {
    std::string metric;
    double measured = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string relation;  // "<", "<=", ">=" ...
};

std::string format_check(const Check& c);

struct GradcheckOptions {
    std::size_t nets = 100;
    std::size_t inputs = 100;
    std::uint64_t seed = 0;
    double threshold = 1e-5;
};
std::vector<Check> gradcheck_checks(const GradcheckOptions& opts);

/// Harmonic-oscillator checks: rollout against the explicit matrix power
/// and one-step error reduction under repeated halving of dt.
std::vector<Check> oracle_checks(double dt = 0.01, std::size_t horizon = 20, std::size_t halvings = 3);

struct PointwiseOptions {
    std::optional<std::string> ckpt_path;
    std::size_t max_j = 3;
    std::size_t starts = 500;
    std::uint64_t seed = 12345;
    double threshold = 0.05;  // applied to j = 1
};

struct RegretOptions {
    std::optional<std::string> config_path;
    std::size_t seeds = 5;
    std::uint64_t first_seed = 1;
    double threshold = 1.0;
    std::optional<std::string> out_dir;
};

struct DiagnoseOptions {
    std::string mode;  // gradcheck | oracle | pointwise | regret
    GradcheckOptions gradcheck;
    PointwiseOptions pointwise;
    RegretOptions regret;
};

int cmd_diagnose(const DiagnoseOptions& opts, std::ostream& out, std::ostream& err);

/// Entry point shared by the dfpo tool; argv parsing lives here so tests can
/// drive the same code path.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dfpo::cli
