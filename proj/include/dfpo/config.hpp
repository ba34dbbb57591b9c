// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfpo/environments.hpp"
#include "dfpo/trainer.hpp"

namespace dfpo {

/// Ordered key/value pairs, as read from or written to a config file.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Everything needed to reproduce a training run.
struct RunConfig {
    EnvSpec env;
    ScheduleMode schedule_mode = ScheduleMode::Budget;
    ScheduleParams schedule;
    NetConfig net;
    FitConfig fit;
    std::uint64_t seed = 0;
    std::string out_dir = "run";

    StageSchedule make_stage_schedule() const;
};

/// Parse `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; a value may carry a trailing `# comment`. `source` prefixes
/// diagnostics. Throws ConfigError.
ConfigEntries parse_entries(const std::string& text, const std::string& source);

/// Build and validate a config. env.kind is mandatory; for the quadratic
/// task env.steps and env.dt are mandatory too, other kinds fall back to
/// their task defaults. Unknown keys are rejected. Throws ConfigError naming
/// the offending field.
RunConfig config_from_entries(const ConfigEntries& entries, const std::string& source = "config");

RunConfig load_config(const std::string& path);

/// Canonical, complete echo of a config. config_from_entries(config_entries(c))
/// reproduces c.
ConfigEntries config_entries(const RunConfig& config);

std::string render_entries(const ConfigEntries& entries);

/// Shortest decimal text that parses back to the same double.
std::string shortest_double(double v);

}  // namespace dfpo
