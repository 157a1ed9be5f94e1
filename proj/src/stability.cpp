// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/stability.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "saked/error.hpp"

namespace saked {

VasResult visual_activation_score(std::span<const float> weights,
                                  int entropy_sign) {
  if (weights.empty()) throw InvalidInputError("VAS of an empty map");
  if (entropy_sign != 1 && entropy_sign != -1) {
    throw InvalidInputError("entropy sign must be +1 or -1");
  }
  const auto normalized = normalize_weights(weights);
  if (normalized.degenerate) return {0.0, 0.0, 0.0, true};
  const auto values = normalized.dist.values();
  VasResult r;
  r.max_value = *std::max_element(values.begin(), values.end());
  r.entropy = entropy(normalized.dist);
  r.value = r.max_value + entropy_sign * r.entropy;
  return r;
}

HeadSelection select_heads(std::span<const AttentionMap> layer_maps, int k,
                           int entropy_sign) {
  if (k < 1 || static_cast<std::size_t>(k) > layer_maps.size()) {
    throw InvalidInputError("cannot select " + std::to_string(k) +
                            " heads out of " +
                            std::to_string(layer_maps.size()));
  }
  HeadSelection sel;
  sel.layer = layer_maps.front().layer;
  sel.vas_values.reserve(layer_maps.size());
  for (const auto& map : layer_maps) {
    sel.vas_values.push_back(
        visual_activation_score(map.weights, entropy_sign).value);
  }
  for (std::size_t h : top_k_indices(sel.vas_values, static_cast<std::size_t>(k))) {
    sel.selected_heads.push_back(static_cast<int>(h));
  }
  return sel;
}

double chss(std::span<const ProbDist> selected, double epsilon,
            bool pair_mean) {
  const std::size_t k = selected.size();
  if (k < 2) {
    throw InvalidInputError("CHSS needs at least two heads, got " +
                            std::to_string(k));
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t j = s + 1; j < k; ++j) {
      sum += soft_iou(selected[s].values(), selected[j].values(), epsilon);
    }
  }
  const double value = sum / static_cast<double>(k * (k - 1));
  return pair_mean ? 2.0 * value : value;
}

double chss(const HeadSelection& selection,
            std::span<const AttentionMap> layer_maps, double epsilon,
            bool pair_mean) {
  std::vector<ProbDist> dists;
  dists.reserve(selection.selected_heads.size());
  for (int h : selection.selected_heads) {
    if (h < 0 || static_cast<std::size_t>(h) >= layer_maps.size()) {
      throw InvalidInputError("selected head " + std::to_string(h) +
                              " out of range");
    }
    dists.push_back(normalize_weights(layer_maps[h].weights).dist);
  }
  return chss(dists, epsilon, pair_mean);
}

double clss(std::span<const float> hidden, std::span<const float> hidden_prev,
            const LogitLensProjector& projector) {
  const auto p = softmax(projector.project(hidden));
  const auto q = softmax(projector.project(hidden_prev));
  return 1.0 - jsd(p, q);
}

double vfd(std::span<const AttentionMap> current,
           std::span<const AttentionMap> previous) {
  if (current.size() != previous.size() || current.empty()) {
    throw InvalidInputError("VFD needs matching non-empty head sets");
  }
  double sum = 0.0;
  for (std::size_t h = 0; h < current.size(); ++h) {
    if (current[h].weights.size() != previous[h].weights.size()) {
      throw InvalidInputError("VFD visual-token count mismatch");
    }
    sum += jsd(normalize_weights(current[h].weights).dist,
               normalize_weights(previous[h].weights).dist);
  }
  return sum / static_cast<double>(current.size());
}

double ctss(std::span<const AttentionMap> current,
            std::optional<std::span<const AttentionMap>> previous) {
  if (!previous) return 1.0;
  return 1.0 - vfd(current, *previous);
}

double kss(double chss_value, double clss_value, double ctss_value,
           const ScoreWeights& w) {
  if (!(w.chss >= 0.0) || !(w.clss >= 0.0) || !(w.ctss >= 0.0)) {
    throw ConfigError("score weights must be non-negative");
  }
  if (w.chss + w.clss + w.ctss <= 0.0) {
    throw ConfigError("score weights lambda1..3 are all zero");
  }
  return w.chss * chss_value + w.clss * clss_value + w.ctss * ctss_value;
}

const LayerScores& StabilityReport::scores_for(int layer) const {
  for (const auto& s : per_layer) {
    if (s.layer == layer) return s;
  }
  throw InvalidInputError("layer " + std::to_string(layer) +
                          " is not in this report");
}

StabilityReport score_step(const ModelMeta& meta,
                           const LogitLensProjector& projector,
                           const StepTrace& step, const StepTrace* previous,
                           const ResolvedConfig& resolved) {
  const SakedConfig& cfg = resolved.config;
  const ScoreWeights weights{cfg.lambda1, cfg.lambda2, cfg.lambda3};
  StabilityReport report;
  report.step_index = step.step_index;
  report.flags = resolved.warnings;
  if (previous == nullptr) report.flags.emplace_back("ctss_first_step");

  const std::string tag_prefix = "l";
  for (int layer : resolved.layers) {
    LayerScores s;
    s.layer = layer;
    const auto maps = layer_attention(meta, step, layer);
    const std::string tag = tag_prefix + std::to_string(layer);

    for (const auto& map : maps) {
      if (normalize_weights(map.weights).degenerate) {
        report.flags.push_back("degenerate_attention:" + tag + "h" +
                               std::to_string(map.head));
      }
    }
    const auto selection =
        select_heads(maps, resolved.k_heads, cfg.vas_entropy_sign);
    s.selected_heads = selection.selected_heads;
    s.chss = chss(selection, maps, cfg.epsilon, cfg.chss_pair_mean);

    int neighbor = layer - 1;
    if (!meta.layer_stored(neighbor)) {
      neighbor = layer + 1;
      report.flags.push_back("clss_boundary_neighbor:" + tag);
    }
    s.clss = clss(hidden_at(meta, step, layer), hidden_at(meta, step, neighbor),
                  projector);

    if (previous == nullptr) {
      s.ctss = 1.0;
    } else {
      const int slot_end = (layer - meta.stored_range().first + 1) * meta.num_heads;
      if (static_cast<std::size_t>(slot_end) > previous->attn.size()) {
        s.ctss = 1.0;
        report.flags.push_back("ctss_missing_previous:" + tag);
      } else {
        s.ctss = ctss(maps, layer_attention(meta, *previous, layer));
      }
    }
    s.kss = kss(s.chss, s.clss, s.ctss, weights);
    report.per_layer.push_back(std::move(s));
  }

  std::size_t best = 0;
  std::size_t worst = 0;
  for (std::size_t i = 1; i < report.per_layer.size(); ++i) {
    if (report.per_layer[i].kss > report.per_layer[best].kss) best = i;
    if (report.per_layer[i].kss < report.per_layer[worst].kss) worst = i;
  }
  report.positive_layer = report.per_layer[best].layer;
  report.negative_layer = report.per_layer[worst].layer;
  if (report.positive_layer == report.negative_layer) {
    report.flags.emplace_back("degenerate_contrast");
  }
  return report;
}

StabilityReport build_report(const DecodingTrace& trace, int step_index,
                             const SakedConfig& config) {
  if (step_index < 0 ||
      static_cast<std::size_t>(step_index) >= trace.steps.size()) {
    throw InvalidInputError("step " + std::to_string(step_index) +
                            " does not exist (trace has " +
                            std::to_string(trace.steps.size()) + " steps)");
  }
  const auto resolved = resolve_config(config, trace.meta);
  const StepTrace* previous =
      step_index > 0 ? &trace.steps[static_cast<std::size_t>(step_index) - 1]
                     : nullptr;
  return score_step(trace.meta, trace.projector,
                    trace.steps[static_cast<std::size_t>(step_index)], previous,
                    resolved);
}

}  // namespace saked
