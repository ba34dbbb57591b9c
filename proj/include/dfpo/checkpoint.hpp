// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "dfpo/config.hpp"
#include "dfpo/diffcore.hpp"

namespace dfpo {

/// Persisted score network plus the run description that produced it.
///
/// File layout:
///   "DFPO1\n"
///   u64 header length, then that many bytes of UTF-8 `key = value` lines
///   u64 parameter count, then that many f64 values in parameter_shapes() order
///   u64 FNV-1a digest of the parameter block (count and values)
/// Integers and floats are little-endian.
struct Checkpoint {
    ConfigEntries header;  // config echo plus ckpt.* metadata
    std::size_t stage = 0;
    bool final = false;
    std::string created;  // UTC, ISO 8601
    ScoreNet net;

    /// Rebuild the run configuration echoed in the header.
    RunConfig config() const;
};

Checkpoint make_checkpoint(const RunConfig& config, const ScoreNet& net, std::size_t stage, bool final);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Throws IoError if unreadable, ChecksumError on a bad magic, truncation or
/// digest mismatch, ShapeError when the declared shapes disagree with the
/// stored parameter count (checked before any parameter is read).
Checkpoint load_checkpoint(const std::string& path);

/// "4x64;64;64x64;64;1x64;1" style rendering used in the header.
std::string render_shapes(const std::vector<std::vector<std::size_t>>& shapes);
std::vector<std::vector<std::size_t>> parse_shapes(const std::string& text);

}  // namespace dfpo
