// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saked/config.hpp"
#include "saked/numerics.hpp"
#include "saked/trace.hpp"

namespace saked {

/// Visual activation score of one head: max + sign * entropy of the
/// renormalized visual attention. An all-zero map scores 0 and is flagged.
struct VasResult {
  double value = 0.0;
  double max_value = 0.0;
  double entropy = 0.0;
  bool degenerate = false;
};

VasResult visual_activation_score(std::span<const float> weights,
                                  int entropy_sign = +1);

struct HeadSelection {
  int layer = 0;
  std::vector<int> selected_heads;  // highest VAS first
  std::vector<double> vas_values;   // one per head
};

/// Picks the k heads with the highest VAS (ties: lower head index).
HeadSelection select_heads(std::span<const AttentionMap> layer_maps, int k,
                           int entropy_sign = +1);

/// Cross-head stability over already-normalized selected maps:
/// sum_{s<k} SoftIoU / (K(K-1)), doubled when `pair_mean` is set so the
/// result becomes the plain pair average.
double chss(std::span<const ProbDist> selected, double epsilon,
            bool pair_mean = false);
double chss(const HeadSelection& selection,
            std::span<const AttentionMap> layer_maps, double epsilon,
            bool pair_mean = false);

/// 1 - JSD between the LogitLens distributions of two layers.
double clss(std::span<const float> hidden, std::span<const float> hidden_prev,
            const LogitLensProjector& projector);

/// Head-averaged JSD between one layer's attention at consecutive steps.
double vfd(std::span<const AttentionMap> current,
           std::span<const AttentionMap> previous);

/// 1 - VFD, or exactly 1 when there is no previous step.
double ctss(std::span<const AttentionMap> current,
            std::optional<std::span<const AttentionMap>> previous);

struct ScoreWeights {
  double chss = 1.0;
  double clss = 1.0;
  double ctss = 1.0;
};

double kss(double chss_value, double clss_value, double ctss_value,
           const ScoreWeights& weights);

struct LayerScores {
  int layer = 0;
  double chss = 0.0;
  double clss = 0.0;
  double ctss = 0.0;
  double kss = 0.0;
  std::vector<int> selected_heads;
};

struct StabilityReport {
  int step_index = 0;
  std::vector<LayerScores> per_layer;  // ascending layer order
  int positive_layer = 0;
  int negative_layer = 0;
  std::vector<std::string> flags;

  const LayerScores& scores_for(int layer) const;
};

/// Scores one step given the previous step (absent at t = 0).
StabilityReport score_step(const ModelMeta& meta,
                           const LogitLensProjector& projector,
                           const StepTrace& step, const StepTrace* previous,
                           const ResolvedConfig& config);

StabilityReport build_report(const DecodingTrace& trace, int step_index,
                             const SakedConfig& config);

}  // namespace saked
