// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"
#include "saked/error.hpp"

namespace saked {

SakedConfig identity_config() {
  SakedConfig c;
  c.alpha = 0.0;
  c.beta = 0.0;
  return c;
}

std::span<const ModelPreset> model_presets() {
  // alpha / beta / candidate range as highlighted in the hyperparameter
  // ablations; layer indices are the backbone's own numbering.
  static const std::array<ModelPreset, 6> presets = {{
      {"llava-1.5", 0.4, 0.8, LayerRange{26, 30}},
      {"instructblip", 0.5, 0.4, LayerRange{22, 26}},
      {"minigpt-4", 0.5, 0.4, LayerRange{18, 22}},
      {"internvl3", 0.1, 0.4, LayerRange{18, 22}},
      {"qwen2.5-vl", 0.3, 0.8, LayerRange{16, 20}},
      {"toy", 0.4, 0.8, std::nullopt},
  }};
  return presets;
}

const ModelPreset& find_preset(std::string_view name) {
  for (const auto& p : model_presets()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& p : model_presets()) {
    if (!known.empty()) known += ", ";
    known += p.name;
  }
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (known: " + known + ")");
}

SakedConfig apply_preset(SakedConfig config, const ModelPreset& preset) {
  config.alpha = preset.alpha;
  config.beta = preset.beta;
  config.candidate_layers.clear();
  if (preset.candidate_layers) {
    for (int l = preset.candidate_layers->first;
         l <= preset.candidate_layers->last; ++l) {
      config.candidate_layers.push_back(l);
    }
  }
  return config;
}

std::vector<int> default_candidate_layers(int num_layers) {
  std::vector<int> out;
  for (int l = std::max(1, num_layers / 2); l <= num_layers - 1; ++l) {
    out.push_back(l);
  }
  return out;
}

namespace {

void require_finite_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ConfigError(std::string(name) + " must be finite and >= 0");
  }
}

}  // namespace

ResolvedConfig resolve_config(const SakedConfig& config,
                              const ModelMeta& meta) {
  ResolvedConfig out;
  out.config = config;
  require_finite_nonneg(config.lambda1, "lambda1");
  require_finite_nonneg(config.lambda2, "lambda2");
  require_finite_nonneg(config.lambda3, "lambda3");
  if (config.lambda1 + config.lambda2 + config.lambda3 <= 0.0) {
    throw ConfigError("score weights lambda1..3 are all zero");
  }
  require_finite_nonneg(config.alpha, "alpha");
  require_finite_nonneg(config.beta, "beta");
  require_finite_nonneg(config.epsilon, "epsilon");
  if (config.vas_entropy_sign != 1 && config.vas_entropy_sign != -1) {
    throw ConfigError("vas_entropy_sign must be +1 or -1");
  }

  out.k_heads = config.k_heads.value_or(std::min(8, meta.num_heads));
  if (out.k_heads < 2 || out.k_heads > meta.num_heads) {
    throw ConfigError("k_heads=" + std::to_string(out.k_heads) +
                      " must lie in [2, H=" + std::to_string(meta.num_heads) +
                      "] for a pairwise head score");
  }

  if (config.q < 1) throw ConfigError("q must be positive");
  out.q = config.q;
  if (out.q > meta.vocab_size) {
    out.q = meta.vocab_size;
    out.warnings.push_back("q clipped from " + std::to_string(config.q) +
                           " to vocabulary size " +
                           std::to_string(meta.vocab_size));
  }

  out.layers = config.candidate_layers.empty()
                   ? default_candidate_layers(meta.num_layers)
                   : config.candidate_layers;
  std::sort(out.layers.begin(), out.layers.end());
  out.layers.erase(std::unique(out.layers.begin(), out.layers.end()),
                   out.layers.end());
  for (int l : out.layers) {
    if (l < 1 || l > meta.num_layers - 1) {
      throw ConfigError("candidate layer " + std::to_string(l) +
                        " outside [1, L-1] = [1, " +
                        std::to_string(meta.num_layers - 1) + "]");
    }
    if (!meta.layer_stored(l)) {
      throw ConfigError("candidate layer " + std::to_string(l) +
                        " is not stored in the trace");
    }
  }
  if (out.layers.size() < 2) {
    throw ConfigError("candidate layer set needs at least two layers");
  }
  return out;
}

std::vector<int> parse_layer_list(std::string_view text) {
  std::vector<int> out;
  const auto parse_int = [&](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
      s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
      s.remove_suffix(1);
    }
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("bad layer index '" + std::string(s) + "'");
    }
    return v;
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(
        start, comma == std::string_view::npos ? std::string_view::npos
                                               : comma - start);
    const auto dash = item.find('-', 1);
    if (dash != std::string_view::npos) {
      const int lo = parse_int(item.substr(0, dash));
      const int hi = parse_int(item.substr(dash + 1));
      if (hi < lo) throw ConfigError("empty layer range '" + std::string(item) + "'");
      for (int l = lo; l <= hi; ++l) out.push_back(l);
    } else {
      out.push_back(parse_int(item));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "preset",  "lambda1", "lambda2", "lambda3",          "alpha",
      "beta",    "q",       "k_heads", "candidate_layers", "vas_entropy_sign",
      "chss_pair_mean",     "epsilon", "protect_eos"};
  return keys;
}

template <typename T>
T json_value(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

void assign_from_json(PartialConfig& out, const std::string& key,
                      const json& v) {
  if (!known_keys().contains(key)) {
    throw ConfigError("unknown config field '" + key + "'");
  }
  if (key == "preset") {
    out.preset = json_value<std::string>(v, key);
  } else if (key == "lambda1") {
    out.lambda1 = json_value<double>(v, key);
  } else if (key == "lambda2") {
    out.lambda2 = json_value<double>(v, key);
  } else if (key == "lambda3") {
    out.lambda3 = json_value<double>(v, key);
  } else if (key == "alpha") {
    out.alpha = json_value<double>(v, key);
  } else if (key == "beta") {
    out.beta = json_value<double>(v, key);
  } else if (key == "epsilon") {
    out.epsilon = json_value<double>(v, key);
  } else if (key == "q") {
    out.q = json_value<int>(v, key);
  } else if (key == "k_heads") {
    out.k_heads = json_value<int>(v, key);
  } else if (key == "vas_entropy_sign") {
    out.vas_entropy_sign = json_value<int>(v, key);
  } else if (key == "candidate_layers") {
    if (v.is_string()) {
      out.candidate_layers = parse_layer_list(v.get<std::string>());
    } else {
      out.candidate_layers = json_value<std::vector<int>>(v, key);
    }
  } else if (key == "chss_pair_mean") {
    out.chss_pair_mean = json_value<bool>(v, key);
  } else if (key == "protect_eos") {
    out.protect_eos = json_value<bool>(v, key);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Converts one TOML scalar/array literal to JSON so both file forms share
// the same typed assignment path.
json toml_literal(std::string_view raw, std::size_t line_no) {
  const auto fail = [&](const std::string& why) -> json {
    throw ConfigError("TOML line " + std::to_string(line_no) + ": " + why);
  };
  std::string_view v = trim(raw);
  if (v.empty()) return fail("missing value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') return fail("unterminated string");
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v.front() == '[') {
    if (v.back() != ']') return fail("unterminated array");
    json arr = json::array();
    std::string_view body = trim(v.substr(1, v.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      const auto item = trim(body.substr(0, comma));
      if (!item.empty()) arr.push_back(toml_literal(item, line_no));
      if (comma == std::string_view::npos) break;
      body = trim(body.substr(comma + 1));
    }
    return arr;
  }
  try {
    return json::parse(std::string(v));
  } catch (const json::parse_error&) {
    return fail("cannot parse value '" + std::string(v) + "'");
  }
}

}  // namespace

PartialConfig parse_config_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config JSON does not parse: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  PartialConfig out;
  for (const auto& [key, value] : doc.items()) {
    assign_from_json(out, key, value);
  }
  return out;
}

PartialConfig parse_config_toml(std::string_view text) {
  PartialConfig out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    // Strip comments outside of strings.
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (!line.empty()) {
      if (line.front() == '[') {
        if (line != "[saked]") {
          throw ConfigError("TOML line " + std::to_string(line_no) +
                            ": only a [saked] table is supported");
        }
      } else {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
          throw ConfigError("TOML line " + std::to_string(line_no) +
                            ": expected key = value");
        }
        const std::string key(trim(line.substr(0, eq)));
        assign_from_json(out, key, toml_literal(line.substr(eq + 1), line_no));
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

PartialConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  try {
    if (path.extension() == ".toml") return parse_config_toml(text);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      return parse_config_json(text);
    }
    return parse_config_toml(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SakedConfig merge_config(const PartialConfig& file, const PartialConfig& flags) {
  SakedConfig c;
  const auto& preset = flags.preset ? flags.preset : file.preset;
  if (preset) c = apply_preset(c, find_preset(*preset));
  for (const PartialConfig* layer : {&file, &flags}) {
    if (layer->lambda1) c.lambda1 = *layer->lambda1;
    if (layer->lambda2) c.lambda2 = *layer->lambda2;
    if (layer->lambda3) c.lambda3 = *layer->lambda3;
    if (layer->alpha) c.alpha = *layer->alpha;
    if (layer->beta) c.beta = *layer->beta;
    if (layer->epsilon) c.epsilon = *layer->epsilon;
    if (layer->q) c.q = *layer->q;
    if (layer->k_heads) c.k_heads = *layer->k_heads;
    if (layer->vas_entropy_sign) c.vas_entropy_sign = *layer->vas_entropy_sign;
    if (layer->candidate_layers) c.candidate_layers = *layer->candidate_layers;
    if (layer->chss_pair_mean) c.chss_pair_mean = *layer->chss_pair_mean;
    if (layer->protect_eos) c.protect_eos = *layer->protect_eos;
  }
  return c;
}

std::string config_to_json_text(const SakedConfig& c) {
  json j{{"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"lambda3", c.lambda3},
         {"alpha", c.alpha},
         {"beta", c.beta},
         {"q", c.q},
         {"candidate_layers", c.candidate_layers},
         {"vas_entropy_sign", c.vas_entropy_sign},
         {"chss_pair_mean", c.chss_pair_mean},
         {"epsilon", c.epsilon},
         {"protect_eos", c.protect_eos}};
  if (c.k_heads) j["k_heads"] = *c.k_heads;
  return j.dump();
}

}  // namespace saked
