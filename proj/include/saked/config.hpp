// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saked/trace.hpp"

namespace saked {

struct SakedConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double alpha = 0.4;
  double beta = 0.8;
  int q = 20;
  std::optional<int> k_heads;     // unset: min(8, H)
  std::vector<int> candidate_layers;  // empty: [L/2, L-1]
  int vas_entropy_sign = +1;
  bool chss_pair_mean = false;
  double epsilon = 1e-8;
  bool protect_eos = false;

  friend bool operator==(const SakedConfig&, const SakedConfig&) = default;
};

/// alpha = beta = 0: the revision reduces to the model's own greedy choice.
SakedConfig identity_config();

/// Per-backbone hyperparameters selected in the published ablations.
struct ModelPreset {
  std::string name;
  double alpha = 0.0;
  double beta = 0.0;
  std::optional<LayerRange> candidate_layers;  // unset: resolved per model
};

std::span<const ModelPreset> model_presets();
const ModelPreset& find_preset(std::string_view name);
SakedConfig apply_preset(SakedConfig config, const ModelPreset& preset);

/// A config with every model-dependent default filled in and checked
/// against the trace geometry.
struct ResolvedConfig {
  SakedConfig config;
  int k_heads = 0;
  int q = 0;
  std::vector<int> layers;  // sorted, unique
  std::vector<std::string> warnings;
};

/// Default candidate layers: the upper half, [max(1, L/2), L-1].
std::vector<int> default_candidate_layers(int num_layers);

/// Throws ConfigError on any invariant violation (lambdas, L_c, K, q).
ResolvedConfig resolve_config(const SakedConfig& config, const ModelMeta& meta);

// --- config files ---------------------------------------------------------

/// Field-wise optional config; layers merge with flags > file > preset >
/// defaults precedence.
struct PartialConfig {
  std::optional<std::string> preset;
  std::optional<double> lambda1, lambda2, lambda3, alpha, beta, epsilon;
  std::optional<int> q, k_heads, vas_entropy_sign;
  std::optional<std::vector<int>> candidate_layers;
  std::optional<bool> chss_pair_mean, protect_eos;
};

PartialConfig parse_config_json(std::string_view text);
/// Flat `key = value` TOML subset: numbers, booleans, strings, and integer
/// arrays; comments and a single optional [saked] table header.
PartialConfig parse_config_toml(std::string_view text);
/// Dispatches on extension (.toml) or content (leading '{').
PartialConfig load_config_file(const std::filesystem::path& path);

/// Parses "3,4,5", "3-5", or combinations like "2,4-6".
std::vector<int> parse_layer_list(std::string_view text);

SakedConfig merge_config(const PartialConfig& file, const PartialConfig& flags);

std::string config_to_json_text(const SakedConfig& config);

}  // namespace saked
