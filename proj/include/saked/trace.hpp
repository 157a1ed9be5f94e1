// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saked/numerics.hpp"

namespace saked {

using TokenId = std::uint32_t;

enum class NormKind { kRms, kLayer, kNone };

const char* norm_kind_name(NormKind kind);
NormKind parse_norm_kind(const std::string& name);

/// Inclusive layer interval.
struct LayerRange {
  int first = 0;
  int last = 0;

  int size() const noexcept { return last - first + 1; }
  bool contains(int layer) const noexcept {
    return layer >= first && layer <= last;
  }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct ModelMeta {
  int num_layers = 0;
  int num_heads = 0;
  int vocab_size = 0;
  int num_visual_tokens = 0;
  int num_prompt_tokens = 0;
  int hidden_dim = 0;
  std::optional<std::vector<std::string>> token_strings;
  std::optional<TokenId> eos_token;
  // When set, steps carry attention and hidden states only for these layers.
  std::optional<LayerRange> stored_layers;
  // Free-form provenance recorded by the producer (model id, seed, ...).
  std::string source;

  LayerRange stored_range() const noexcept {
    return stored_layers.value_or(LayerRange{0, num_layers - 1});
  }
  int stored_layer_count() const noexcept { return stored_range().size(); }
  bool layer_stored(int layer) const noexcept {
    return stored_range().contains(layer);
  }

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

/// The affine map behind LogitLens: final norm followed by the unembedding.
struct LogitLensProjector {
  NormKind norm_kind = NormKind::kRms;
  float norm_epsilon = 1e-5f;
  std::vector<float> unembedding;  // vocab_size x hidden_dim, row-major
  std::vector<float> norm_scale;   // hidden_dim
  std::optional<std::vector<float>> norm_bias;

  /// Vocabulary logits for one hidden state, evaluated in double precision.
  std::vector<double> project(std::span<const float> hidden) const;

  std::size_t hidden_dim() const noexcept { return norm_scale.size(); }
  std::size_t vocab_size() const noexcept {
    return norm_scale.empty() ? 0 : unembedding.size() / norm_scale.size();
  }

  friend bool operator==(const LogitLensProjector&,
                         const LogitLensProjector&) = default;
};

struct StepTrace {
  int step_index = 0;
  // Layer-major: slot (layer - first_stored) * H + head.
  std::vector<AttentionMap> attn;
  std::vector<std::vector<float>> hidden;  // one d-vector per stored layer
  std::vector<float> final_logits;
  TokenId emitted_token = 0;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

struct DecodingTrace {
  ModelMeta meta;
  LogitLensProjector projector;
  std::vector<StepTrace> steps;
  std::vector<TokenId> prompt_token_ids;

  friend bool operator==(const DecodingTrace&, const DecodingTrace&) = default;
};

// Layer-indexed accessors; throw InvalidInputError for layers outside the
// stored range.
const AttentionMap& attention_at(const ModelMeta& meta, const StepTrace& step,
                                 int layer, int head);
std::span<const AttentionMap> layer_attention(const ModelMeta& meta,
                                              const StepTrace& step,
                                              int layer);
std::span<const float> hidden_at(const ModelMeta& meta, const StepTrace& step,
                                 int layer);

struct Violation {
  std::string field;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate_trace(const DecodingTrace& trace);

// --- SKTR container -------------------------------------------------------

inline constexpr char kTraceMagic[4] = {'S', 'K', 'T', 'R'};
inline constexpr std::uint16_t kTraceVersion = 1;

/// Serializes to the binary container. Throws ValidationError if the trace
/// violates an invariant and IoError if the sink fails.
std::size_t write_trace(const DecodingTrace& trace, std::ostream& out);
std::vector<std::byte> encode_trace(const DecodingTrace& trace);

/// Parses either the binary container or the JSON fixture encoding
/// (detected by a leading '{'). Every invariant is checked after parsing.
DecodingTrace read_trace(std::istream& in);
DecodingTrace decode_trace(std::span<const std::byte> bytes);

void write_trace_file(const DecodingTrace& trace,
                      const std::filesystem::path& path);
DecodingTrace read_trace_file(const std::filesystem::path& path);

std::string trace_to_json_text(const DecodingTrace& trace);

}  // namespace saked
