// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "saked/config.hpp"
#include "saked/numerics.hpp"
#include "saked/stability.hpp"
#include "saked/trace.hpp"

namespace saked {

/// softmax((1 + alpha) * logits_pos - alpha * logits_neg).
ProbDist contrastive_distribution(std::span<const double> logits_pos,
                                  std::span<const double> logits_neg,
                                  double alpha);

struct RevisionOutcome {
  TokenId original_argmax = 0;
  TokenId revised_token = 0;
  ProbDist contrastive_dist;
  // Candidate token -> p_orig + beta * p_cont, in candidate rank order.
  // Not renormalized: only the argmax is consumed.
  std::vector<std::pair<TokenId, double>> combined_scores;
  bool changed = false;
};

/// Restricts to the top-q tokens of `original` and picks the argmax of
/// original + beta * contrastive over that set.
RevisionOutcome revise_token(const ProbDist& original,
                             const ProbDist& contrastive, double beta, int q);

struct StepOutcome {
  StabilityReport report;
  RevisionOutcome revision;
};

StepOutcome saked_step(const ModelMeta& meta,
                       const LogitLensProjector& projector,
                       const StepTrace& step, const StepTrace* previous,
                       const ResolvedConfig& config);
StepOutcome saked_step(const DecodingTrace& trace, int step_index,
                       const SakedConfig& config);

struct ReplaySummary {
  std::size_t steps = 0;
  std::size_t changed = 0;  // revised != original argmax
  std::size_t differs_from_emitted = 0;
};

struct ReplayResult {
  std::vector<StepOutcome> steps;
  ReplaySummary summary;
};

/// Offline replay over a recorded trace. Each step sees the recorded
/// history, not the revised one. `threads` > 1 scores steps in parallel;
/// results are identical for any thread count.
ReplayResult replay_decode(const DecodingTrace& trace,
                           const SakedConfig& config, int threads = 1);

/// Introspection interface for the closed loop: a model already bound to
/// its visual input and prompt.
class GenerationModel {
 public:
  virtual ~GenerationModel() = default;

  virtual const ModelMeta& meta() const = 0;
  virtual const LogitLensProjector& projector() const = 0;
  virtual std::span<const TokenId> prompt() const = 0;
  /// One forward pass over prompt + `generated`; emitted_token is left 0.
  virtual StepTrace forward(std::span<const TokenId> generated) const = 0;
};

struct LiveResult {
  std::vector<TokenId> tokens;
  std::vector<StepOutcome> steps;  // empty under greedy decoding
  std::vector<StepTrace> traces;   // emitted_token = appended token
  bool stopped_on_eos = false;
};

/// Greedy decoding with SAKED revision in the loop: the revised token is
/// appended and conditions the next step.
LiveResult live_decode(const GenerationModel& model, const SakedConfig& config,
                       int max_tokens);

/// Plain greedy decoding of the same model.
LiveResult greedy_decode(const GenerationModel& model, int max_tokens);

}  // namespace saked
