// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/trace.hpp"

#include <cmath>
#include <string>

#include "saked/error.hpp"

namespace saked {

const char* norm_kind_name(NormKind kind) {
  switch (kind) {
    case NormKind::kRms:
      return "rms";
    case NormKind::kLayer:
      return "layer";
    case NormKind::kNone:
      return "none";
  }
  return "none";
}

NormKind parse_norm_kind(const std::string& name) {
  if (name == "rms") return NormKind::kRms;
  if (name == "layer") return NormKind::kLayer;
  if (name == "none") return NormKind::kNone;
  throw FormatError("unknown norm_kind '" + name + "'");
}

std::vector<double> LogitLensProjector::project(
    std::span<const float> hidden) const {
  const std::size_t d = hidden_dim();
  if (hidden.size() != d) {
    throw InvalidInputError("hidden state has length " +
                            std::to_string(hidden.size()) +
                            ", projector expects " + std::to_string(d));
  }
  std::vector<double> normed(d);
  const double eps = norm_epsilon;
  switch (norm_kind) {
    case NormKind::kRms: {
      double ms = 0.0;
      for (float x : hidden) ms += static_cast<double>(x) * x;
      ms /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(ms + eps);
      for (std::size_t j = 0; j < d; ++j) {
        normed[j] = hidden[j] * inv * norm_scale[j];
      }
      break;
    }
    case NormKind::kLayer: {
      double mean = 0.0;
      for (float x : hidden) mean += x;
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (float x : hidden) var += (x - mean) * (x - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) {
        normed[j] = (hidden[j] - mean) * inv * norm_scale[j];
      }
      break;
    }
    case NormKind::kNone:
      for (std::size_t j = 0; j < d; ++j) normed[j] = hidden[j];
      break;
  }
  if (norm_bias && norm_kind != NormKind::kNone) {
    for (std::size_t j = 0; j < d; ++j) normed[j] += (*norm_bias)[j];
  }

  const std::size_t vocab = vocab_size();
  std::vector<double> logits(vocab, 0.0);
  for (std::size_t v = 0; v < vocab; ++v) {
    const float* row = unembedding.data() + v * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += row[j] * normed[j];
    logits[v] = acc;
  }
  return logits;
}

namespace {

int slot_of(const ModelMeta& meta, int layer) {
  if (!meta.layer_stored(layer)) {
    throw InvalidInputError("layer " + std::to_string(layer) +
                            " is not stored in this trace");
  }
  return layer - meta.stored_range().first;
}

}  // namespace

const AttentionMap& attention_at(const ModelMeta& meta, const StepTrace& step,
                                 int layer, int head) {
  if (head < 0 || head >= meta.num_heads) {
    throw InvalidInputError("head " + std::to_string(head) + " out of range");
  }
  const auto idx =
      static_cast<std::size_t>(slot_of(meta, layer) * meta.num_heads + head);
  if (idx >= step.attn.size()) {
    throw InvalidInputError("step " + std::to_string(step.step_index) +
                            " has no attention for layer " +
                            std::to_string(layer));
  }
  return step.attn[idx];
}

std::span<const AttentionMap> layer_attention(const ModelMeta& meta,
                                              const StepTrace& step,
                                              int layer) {
  const auto begin =
      static_cast<std::size_t>(slot_of(meta, layer) * meta.num_heads);
  const auto count = static_cast<std::size_t>(meta.num_heads);
  if (begin + count > step.attn.size()) {
    throw InvalidInputError("step " + std::to_string(step.step_index) +
                            " has no attention for layer " +
                            std::to_string(layer));
  }
  return std::span<const AttentionMap>(step.attn).subspan(begin, count);
}

std::span<const float> hidden_at(const ModelMeta& meta, const StepTrace& step,
                                 int layer) {
  const auto slot = static_cast<std::size_t>(slot_of(meta, layer));
  if (slot >= step.hidden.size()) {
    throw InvalidInputError("step " + std::to_string(step.step_index) +
                            " has no hidden state for layer " +
                            std::to_string(layer));
  }
  return step.hidden[slot];
}

namespace {

class ViolationSink {
 public:
  void add(std::string field, std::string message) {
    out_.push_back({std::move(field), std::move(message)});
  }
  std::vector<Violation> take() { return std::move(out_); }

 private:
  std::vector<Violation> out_;
};

bool all_finite(std::span<const float> xs) {
  for (float x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void validate_meta(const ModelMeta& meta, ViolationSink& sink) {
  const auto positive = [&](const char* name, int value) {
    if (value <= 0) sink.add(std::string("meta.") + name, "must be positive");
  };
  positive("num_layers", meta.num_layers);
  positive("num_heads", meta.num_heads);
  positive("vocab_size", meta.vocab_size);
  positive("num_visual_tokens", meta.num_visual_tokens);
  positive("num_prompt_tokens", meta.num_prompt_tokens);
  positive("hidden_dim", meta.hidden_dim);
  if (meta.num_layers == 1) {
    sink.add("meta.num_layers",
             "at least two layers are needed for a layer-pair contrast");
  }
  if (meta.token_strings &&
      meta.token_strings->size() != static_cast<std::size_t>(meta.vocab_size)) {
    sink.add("meta.token_strings", "expected " +
                                       std::to_string(meta.vocab_size) +
                                       " entries, found " +
                                       std::to_string(meta.token_strings->size()));
  }
  if (meta.eos_token && meta.vocab_size > 0 &&
      *meta.eos_token >= static_cast<TokenId>(meta.vocab_size)) {
    sink.add("meta.eos_token", "outside the vocabulary");
  }
  if (meta.stored_layers) {
    const auto& r = *meta.stored_layers;
    if (r.first < 0 || r.last >= meta.num_layers || r.first > r.last) {
      sink.add("meta.stored_layers", "range must lie within [0, L-1]");
    }
  }
}

void validate_projector(const ModelMeta& meta, const LogitLensProjector& proj,
                        ViolationSink& sink) {
  const auto d = static_cast<std::size_t>(std::max(meta.hidden_dim, 0));
  const auto v = static_cast<std::size_t>(std::max(meta.vocab_size, 0));
  if (proj.unembedding.size() != v * d) {
    sink.add("projector.unembedding",
             "expected " + std::to_string(v * d) + " values, found " +
                 std::to_string(proj.unembedding.size()));
  } else if (!all_finite(proj.unembedding)) {
    sink.add("projector.unembedding", "non-finite value");
  }
  if (proj.norm_scale.size() != d) {
    sink.add("projector.norm_scale", "expected " + std::to_string(d) +
                                         " values, found " +
                                         std::to_string(proj.norm_scale.size()));
  } else if (!all_finite(proj.norm_scale)) {
    sink.add("projector.norm_scale", "non-finite value");
  }
  if (proj.norm_bias) {
    if (proj.norm_bias->size() != d) {
      sink.add("projector.norm_bias", "expected " + std::to_string(d) +
                                          " values, found " +
                                          std::to_string(proj.norm_bias->size()));
    } else if (!all_finite(*proj.norm_bias)) {
      sink.add("projector.norm_bias", "non-finite value");
    }
  }
  if (!(proj.norm_epsilon >= 0.0f) || !std::isfinite(proj.norm_epsilon)) {
    sink.add("projector.norm_epsilon", "must be finite and non-negative");
  }
}

void validate_step(const ModelMeta& meta, const StepTrace& step,
                   std::size_t position, ViolationSink& sink) {
  const std::string base = idx("steps", position);
  if (step.step_index != static_cast<int>(position)) {
    sink.add(base + ".step_index", "expected " + std::to_string(position) +
                                       ", found " +
                                       std::to_string(step.step_index));
  }
  const int layers = meta.stored_layer_count();
  const int first = meta.stored_range().first;
  const auto expected_maps =
      static_cast<std::size_t>(std::max(layers * meta.num_heads, 0));
  const auto m = static_cast<std::size_t>(std::max(meta.num_visual_tokens, 0));
  if (step.attn.size() != expected_maps) {
    sink.add(base + ".attn", "expected L*H = " +
                                 std::to_string(expected_maps) +
                                 " maps, found " +
                                 std::to_string(step.attn.size()));
  } else {
    for (std::size_t i = 0; i < step.attn.size(); ++i) {
      const auto& map = step.attn[i];
      const std::string field = idx(base + ".attn", i);
      const int want_layer = first + static_cast<int>(i) / meta.num_heads;
      const int want_head = static_cast<int>(i) % meta.num_heads;
      if (map.layer != want_layer || map.head != want_head) {
        sink.add(field, "labelled (" + std::to_string(map.layer) + ", " +
                            std::to_string(map.head) + "), expected (" +
                            std::to_string(want_layer) + ", " +
                            std::to_string(want_head) + ")");
      }
      if (map.weights.size() != m) {
        sink.add(field + ".weights", "expected " + std::to_string(m) +
                                         " visual weights, found " +
                                         std::to_string(map.weights.size()));
        continue;
      }
      for (std::size_t j = 0; j < m; ++j) {
        const float w = map.weights[j];
        if (!std::isfinite(w) || w < 0.0f) {
          sink.add(idx(field + ".weights", j),
                   "attention weight must be finite and non-negative");
        }
      }
    }
  }
  const auto d = static_cast<std::size_t>(std::max(meta.hidden_dim, 0));
  if (step.hidden.size() != static_cast<std::size_t>(std::max(layers, 0))) {
    sink.add(base + ".hidden", "expected " + std::to_string(layers) +
                                   " layers, found " +
                                   std::to_string(step.hidden.size()));
  } else {
    for (std::size_t l = 0; l < step.hidden.size(); ++l) {
      if (step.hidden[l].size() != d) {
        sink.add(idx(base + ".hidden", l),
                 "expected " + std::to_string(d) + " values, found " +
                     std::to_string(step.hidden[l].size()));
      } else if (!all_finite(step.hidden[l])) {
        sink.add(idx(base + ".hidden", l), "non-finite value");
      }
    }
  }
  const auto v = static_cast<std::size_t>(std::max(meta.vocab_size, 0));
  if (step.final_logits.size() != v) {
    sink.add(base + ".final_logits", "expected " + std::to_string(v) +
                                         " values, found " +
                                         std::to_string(step.final_logits.size()));
  } else if (!all_finite(step.final_logits)) {
    sink.add(base + ".final_logits", "non-finite value");
  }
  if (step.emitted_token >= static_cast<TokenId>(v)) {
    sink.add(base + ".emitted_token", "outside the vocabulary");
  }
}

}  // namespace

std::vector<Violation> validate_trace(const DecodingTrace& trace) {
  ViolationSink sink;
  validate_meta(trace.meta, sink);
  validate_projector(trace.meta, trace.projector, sink);
  const auto& meta = trace.meta;
  if (trace.prompt_token_ids.size() !=
      static_cast<std::size_t>(std::max(meta.num_prompt_tokens, 0))) {
    sink.add("prompt_token_ids",
             "expected " + std::to_string(meta.num_prompt_tokens) +
                 " ids, found " + std::to_string(trace.prompt_token_ids.size()));
  }
  for (std::size_t i = 0; i < trace.prompt_token_ids.size(); ++i) {
    if (trace.prompt_token_ids[i] >= static_cast<TokenId>(meta.vocab_size)) {
      sink.add(idx("prompt_token_ids", i), "outside the vocabulary");
    }
  }
  // Step payload checks need sane dimensions first.
  if (meta.num_heads > 0 && meta.num_layers > 0) {
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      validate_step(meta, trace.steps[t], t, sink);
    }
  }
  return sink.take();
}

}  // namespace saked
