// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/decoder.hpp"

#include <algorithm>
#include <exception>
#include <optional>
#include <thread>

#include "saked/error.hpp"

namespace saked {

ProbDist contrastive_distribution(std::span<const double> logits_pos,
                                  std::span<const double> logits_neg,
                                  double alpha) {
  if (logits_pos.size() != logits_neg.size()) {
    throw InvalidInputError("contrastive logits length mismatch: " +
                            std::to_string(logits_pos.size()) + " vs " +
                            std::to_string(logits_neg.size()));
  }
  if (!(alpha >= 0.0)) throw InvalidInputError("alpha must be >= 0");
  std::vector<double> combined(logits_pos.size());
  for (std::size_t i = 0; i < combined.size(); ++i) {
    combined[i] = (1.0 + alpha) * logits_pos[i] - alpha * logits_neg[i];
  }
  return softmax(combined);
}

RevisionOutcome revise_token(const ProbDist& original,
                             const ProbDist& contrastive, double beta, int q) {
  if (original.dim() != contrastive.dim()) {
    throw InvalidInputError("revision distributions differ in dimension");
  }
  if (q < 1 || static_cast<std::size_t>(q) > original.dim()) {
    throw ConfigError("q=" + std::to_string(q) + " outside [1, |V|=" +
                      std::to_string(original.dim()) + "]");
  }
  RevisionOutcome out;
  out.original_argmax = static_cast<TokenId>(argmax(original.values()));
  out.contrastive_dist = contrastive;

  const auto candidates =
      top_k_indices(original.values(), static_cast<std::size_t>(q));
  out.combined_scores.reserve(candidates.size());
  std::optional<std::pair<TokenId, double>> best;
  for (std::size_t idx : candidates) {
    const double score = original[idx] + beta * contrastive[idx];
    const auto token = static_cast<TokenId>(idx);
    out.combined_scores.emplace_back(token, score);
    if (!best || score > best->second ||
        (score == best->second && token < best->first)) {
      best = {token, score};
    }
  }
  out.revised_token = best->first;
  out.changed = out.revised_token != out.original_argmax;
  return out;
}

StepOutcome saked_step(const ModelMeta& meta,
                       const LogitLensProjector& projector,
                       const StepTrace& step, const StepTrace* previous,
                       const ResolvedConfig& resolved) {
  const SakedConfig& cfg = resolved.config;
  StepOutcome out;
  out.report = score_step(meta, projector, step, previous, resolved);
  const auto logits_pos =
      projector.project(hidden_at(meta, step, out.report.positive_layer));
  const auto logits_neg =
      projector.project(hidden_at(meta, step, out.report.negative_layer));
  const auto contrastive =
      contrastive_distribution(logits_pos, logits_neg, cfg.alpha);
  const auto original = softmax(to_double(step.final_logits));
  out.revision = revise_token(original, contrastive, cfg.beta, resolved.q);

  if (cfg.protect_eos && meta.eos_token &&
      out.revision.original_argmax == *meta.eos_token &&
      out.revision.changed) {
    out.revision.revised_token = *meta.eos_token;
    out.revision.changed = false;
    out.report.flags.emplace_back("eos_protected");
  }
  return out;
}

StepOutcome saked_step(const DecodingTrace& trace, int step_index,
                       const SakedConfig& config) {
  if (step_index < 0 ||
      static_cast<std::size_t>(step_index) >= trace.steps.size()) {
    throw InvalidInputError("step " + std::to_string(step_index) +
                            " does not exist");
  }
  const auto resolved = resolve_config(config, trace.meta);
  const auto t = static_cast<std::size_t>(step_index);
  return saked_step(trace.meta, trace.projector, trace.steps[t],
                    t > 0 ? &trace.steps[t - 1] : nullptr, resolved);
}

namespace {

[[noreturn]] void rethrow_at_step(int step, const std::exception& e) {
  const std::string msg = "step " + std::to_string(step) + ": " + e.what();
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::kConfig:
        throw ConfigError(msg);
      case ErrorKind::kFormat:
        throw FormatError(msg);
      case ErrorKind::kValidation:
        throw ValidationError("steps[" + std::to_string(step) + "]", e.what());
      case ErrorKind::kIo:
        throw IoError(msg);
      case ErrorKind::kInvalidInput:
        break;
    }
  }
  throw InvalidInputError(msg);
}

}  // namespace

ReplayResult replay_decode(const DecodingTrace& trace,
                           const SakedConfig& config, int threads) {
  ReplayResult result;
  if (trace.steps.empty()) return result;
  const auto resolved = resolve_config(config, trace.meta);
  const std::size_t n = trace.steps.size();
  std::vector<StepOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);

  const auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t t = begin; t < n; t += stride) {
      try {
        outcomes[t] = saked_step(trace.meta, trace.projector, trace.steps[t],
                                 t > 0 ? &trace.steps[t - 1] : nullptr,
                                 resolved);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(
      std::clamp(threads, 1, static_cast<int>(std::min<std::size_t>(n, 64))));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (!errors[t]) continue;
    try {
      std::rethrow_exception(errors[t]);
    } catch (const std::exception& e) {
      rethrow_at_step(static_cast<int>(t), e);
    }
  }

  result.steps = std::move(outcomes);
  result.summary.steps = n;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& rev = result.steps[t].revision;
    if (rev.changed) ++result.summary.changed;
    if (rev.revised_token != trace.steps[t].emitted_token) {
      ++result.summary.differs_from_emitted;
    }
  }
  return result;
}

namespace {

LiveResult run_loop(const GenerationModel& model,
                    const ResolvedConfig* resolved, int max_tokens) {
  LiveResult result;
  const auto& meta = model.meta();
  for (int t = 0; t < max_tokens; ++t) {
    TokenId token = 0;
    try {
      StepTrace step = model.forward(result.tokens);
      step.step_index = t;
      if (resolved != nullptr) {
        const StepTrace* previous =
            result.traces.empty() ? nullptr : &result.traces.back();
        auto outcome =
            saked_step(meta, model.projector(), step, previous, *resolved);
        token = outcome.revision.revised_token;
        result.steps.push_back(std::move(outcome));
      } else {
        token = static_cast<TokenId>(argmax(to_double(step.final_logits)));
      }
      step.emitted_token = token;
      result.traces.push_back(std::move(step));
    } catch (const std::exception& e) {
      rethrow_at_step(t, e);
    }
    result.tokens.push_back(token);
    if (meta.eos_token && token == *meta.eos_token) {
      result.stopped_on_eos = true;
      break;
    }
  }
  return result;
}

}  // namespace

LiveResult live_decode(const GenerationModel& model, const SakedConfig& config,
                       int max_tokens) {
  const auto resolved = resolve_config(config, model.meta());
  return run_loop(model, &resolved, max_tokens);
}

LiveResult greedy_decode(const GenerationModel& model, int max_tokens) {
  return run_loop(model, nullptr, max_tokens);
}

}  // namespace saked
