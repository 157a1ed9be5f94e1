// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "saked/config.hpp"
#include "saked/decoder.hpp"
#include "saked/eval_metrics.hpp"
#include "saked/stability.hpp"

namespace saked {

// Serialized forms shared by the CLI and the golden-file tests. Doubles are
// written with 17 significant digits so they round-trip exactly.

std::string report_to_json(const StabilityReport& report,
                           const SakedConfig& config);
/// Header row plus one row per candidate layer.
std::string report_to_csv(const StabilityReport& report);

/// One JSON object (no trailing newline) for a replay/live step.
std::string step_to_json_line(const StepOutcome& outcome);
std::string replay_to_csv(const ReplayResult& replay);

/// Ratios plus the same values as percentages.
std::string chair_to_json(const eval::ChairResult& result);
std::string pope_to_json(const eval::PopeResult& result);

}  // namespace saked
