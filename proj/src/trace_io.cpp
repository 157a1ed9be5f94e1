// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

// SKTR v1 container. Layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "SKTR"
//   4       2     u16 version
//   6       4     u32 header byte length H
//   10      H     UTF-8 JSON header
//   10+H    ...   f32 blocks: unembedding (V*d), norm_scale (d),
//                 [norm_bias (d)], then per step:
//                 attn (S*H*m), hidden (S*d), final_logits (V),
//                 u32 emitted_token
//
// S is the number of stored layers (L unless meta.stored_layers is set).

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "saked/error.hpp"
#include "saked/trace.hpp"

namespace saked {
namespace {

using nlohmann::json;

constexpr const char* kAttentionSemantics =
    "post-softmax row of the current position restricted to visual tokens";
constexpr std::uint32_t kMaxHeaderBytes = 64u << 20;

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::byte>(v & 0xff));
    buf_.push_back(static_cast<std::byte>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      buf_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
    }
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  std::vector<std::byte> take() { return std::move(buf_); }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated container while reading ") +
                        what + " at offset " + std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto lo = std::to_integer<std::uint16_t>(data_[pos_]);
    const auto hi = std::to_integer<std::uint16_t>(data_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::to_integer<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::vector<float> f32s(std::size_t n, const char* what) {
    need(n * 4, what);
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) {
        v |= std::to_integer<std::uint32_t>(data_[pos_ + b]) << (8 * b);
      }
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
    return out;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

void throw_if_invalid(const DecodingTrace& trace) {
  auto violations = validate_trace(trace);
  if (violations.empty()) return;
  std::string msg = violations.front().message;
  if (violations.size() > 1) {
    msg += " (+" + std::to_string(violations.size() - 1) + " more";
    for (std::size_t i = 1; i < violations.size() && i < 4; ++i) {
      msg += "; " + violations[i].field;
    }
    msg += ")";
  }
  throw ValidationError(violations.front().field, msg);
}

json meta_to_json(const ModelMeta& meta) {
  json j{{"num_layers", meta.num_layers},
         {"num_heads", meta.num_heads},
         {"vocab_size", meta.vocab_size},
         {"num_visual_tokens", meta.num_visual_tokens},
         {"num_prompt_tokens", meta.num_prompt_tokens},
         {"hidden_dim", meta.hidden_dim},
         {"source", meta.source}};
  if (meta.token_strings) j["token_strings"] = *meta.token_strings;
  if (meta.eos_token) j["eos_token"] = *meta.eos_token;
  if (meta.stored_layers) {
    j["stored_layers"] = {meta.stored_layers->first, meta.stored_layers->last};
  }
  return j;
}

const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError("missing field '" + path + key + "'");
  }
  return j.at(key);
}

template <typename T>
T field_as(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw FormatError("field '" + path + key + "' has the wrong type");
  }
}

int dim_field(const json& j, const char* key) {
  const json& v = require(j, key, "meta.");
  if (!v.is_number_integer()) {
    throw FormatError(std::string("field 'meta.") + key +
                      "' must be an integer");
  }
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() ||
      x > std::numeric_limits<int>::max()) {
    throw FormatError(std::string("field 'meta.") + key + "' out of range");
  }
  return static_cast<int>(x);
}

ModelMeta meta_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("'meta' must be an object");
  ModelMeta meta;
  meta.num_layers = dim_field(j, "num_layers");
  meta.num_heads = dim_field(j, "num_heads");
  meta.vocab_size = dim_field(j, "vocab_size");
  meta.num_visual_tokens = dim_field(j, "num_visual_tokens");
  meta.num_prompt_tokens = dim_field(j, "num_prompt_tokens");
  meta.hidden_dim = dim_field(j, "hidden_dim");
  if (j.contains("source")) meta.source = field_as<std::string>(j, "source", "meta.");
  if (j.contains("token_strings")) {
    meta.token_strings =
        field_as<std::vector<std::string>>(j, "token_strings", "meta.");
  }
  if (j.contains("eos_token")) {
    meta.eos_token = field_as<TokenId>(j, "eos_token", "meta.");
  }
  if (j.contains("stored_layers")) {
    const auto r = field_as<std::vector<int>>(j, "stored_layers", "meta.");
    if (r.size() != 2) {
      throw FormatError("'meta.stored_layers' must be [first, last]");
    }
    meta.stored_layers = LayerRange{r[0], r[1]};
  }
  return meta;
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw FormatError("declared dimensions overflow");
  }
  return a * b;
}

std::uint64_t as_count(int v, const char* name) {
  if (v <= 0) {
    throw ValidationError(std::string("meta.") + name, "must be positive");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

std::vector<std::byte> encode_trace(const DecodingTrace& trace) {
  throw_if_invalid(trace);
  json header{{"meta", meta_to_json(trace.meta)},
              {"projector",
               {{"norm_kind", norm_kind_name(trace.projector.norm_kind)},
                {"norm_epsilon", trace.projector.norm_epsilon},
                {"has_norm_bias", trace.projector.norm_bias.has_value()}}},
              {"attention_semantics", kAttentionSemantics},
              {"num_steps", trace.steps.size()},
              {"prompt_token_ids", trace.prompt_token_ids}};
  const std::string header_text = header.dump();

  ByteWriter w;
  w.bytes(kTraceMagic, sizeof(kTraceMagic));
  w.u16(kTraceVersion);
  w.u32(static_cast<std::uint32_t>(header_text.size()));
  w.bytes(header_text.data(), header_text.size());
  w.f32s(trace.projector.unembedding);
  w.f32s(trace.projector.norm_scale);
  if (trace.projector.norm_bias) w.f32s(*trace.projector.norm_bias);
  for (const auto& step : trace.steps) {
    for (const auto& map : step.attn) w.f32s(map.weights);
    for (const auto& h : step.hidden) w.f32s(h);
    w.f32s(step.final_logits);
    w.u32(step.emitted_token);
  }
  return w.take();
}

std::size_t write_trace(const DecodingTrace& trace, std::ostream& out) {
  const auto bytes = encode_trace(trace);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed to write trace to sink");
  return bytes.size();
}

namespace {

DecodingTrace decode_binary(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.text(4, "magic");
  if (std::memcmp(magic.data(), kTraceMagic, 4) != 0) {
    throw FormatError("bad magic; not an SKTR container");
  }
  const auto version = r.u16("version");
  if (version != kTraceVersion) {
    throw FormatError("unsupported SKTR version " + std::to_string(version) +
                      " (expected " + std::to_string(kTraceVersion) + ")");
  }
  const auto header_len = r.u32("header length");
  if (header_len > kMaxHeaderBytes) {
    throw FormatError("header length " + std::to_string(header_len) +
                      " exceeds limit");
  }
  const std::string header_text = r.text(header_len, "header");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what());
  }

  DecodingTrace trace;
  trace.meta = meta_from_json(require(header, "meta", ""));
  const json& proj = require(header, "projector", "");
  trace.projector.norm_kind =
      parse_norm_kind(field_as<std::string>(proj, "norm_kind", "projector."));
  trace.projector.norm_epsilon =
      field_as<float>(proj, "norm_epsilon", "projector.");
  const bool has_bias = field_as<bool>(proj, "has_norm_bias", "projector.");
  const auto num_steps = field_as<std::uint64_t>(header, "num_steps", "");
  trace.prompt_token_ids =
      field_as<std::vector<TokenId>>(header, "prompt_token_ids", "");

  const auto& meta = trace.meta;
  const std::uint64_t d = as_count(meta.hidden_dim, "hidden_dim");
  const std::uint64_t v = as_count(meta.vocab_size, "vocab_size");
  const std::uint64_t h = as_count(meta.num_heads, "num_heads");
  const std::uint64_t m = as_count(meta.num_visual_tokens, "num_visual_tokens");
  as_count(meta.num_layers, "num_layers");
  if (meta.stored_layers) {
    const auto& sr = *meta.stored_layers;
    if (sr.first < 0 || sr.last >= meta.num_layers || sr.first > sr.last) {
      throw ValidationError("meta.stored_layers",
                            "range must lie within [0, L-1]");
    }
  }
  const std::uint64_t s = static_cast<std::uint64_t>(meta.stored_layer_count());

  // Size check before any payload allocation.
  const std::uint64_t fixed =
      checked_mul(4, checked_mul(v, d) + d + (has_bias ? d : 0));
  const std::uint64_t per_step =
      checked_mul(4, checked_mul(checked_mul(s, h), m) + checked_mul(s, d) + v +
                         1);
  const std::uint64_t expected = fixed + checked_mul(per_step, num_steps);
  if (expected != r.remaining()) {
    if (expected > r.remaining()) {
      throw FormatError("truncated container: payload needs " +
                        std::to_string(expected) + " bytes, " +
                        std::to_string(r.remaining()) + " available");
    }
    throw FormatError("container has " +
                      std::to_string(r.remaining() - expected) +
                      " trailing bytes");
  }

  trace.projector.unembedding = r.f32s(v * d, "unembedding");
  trace.projector.norm_scale = r.f32s(d, "norm_scale");
  if (has_bias) trace.projector.norm_bias = r.f32s(d, "norm_bias");
  const int first = meta.stored_range().first;
  trace.steps.resize(num_steps);
  for (std::uint64_t t = 0; t < num_steps; ++t) {
    auto& step = trace.steps[t];
    step.step_index = static_cast<int>(t);
    step.attn.resize(s * h);
    for (std::uint64_t i = 0; i < s * h; ++i) {
      step.attn[i].layer = first + static_cast<int>(i / h);
      step.attn[i].head = static_cast<int>(i % h);
      step.attn[i].weights = r.f32s(m, "attn");
    }
    step.hidden.resize(s);
    for (auto& hv : step.hidden) hv = r.f32s(d, "hidden");
    step.final_logits = r.f32s(v, "final_logits");
    step.emitted_token = r.u32("emitted_token");
  }
  throw_if_invalid(trace);
  return trace;
}

std::vector<float> float_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError("'" + path + "' must be an array");
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) {
      throw FormatError("'" + path + "' must contain only numbers");
    }
    out.push_back(static_cast<float>(x.get<double>()));
  }
  return out;
}

DecodingTrace decode_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("trace JSON does not parse: ") + e.what());
  }
  DecodingTrace trace;
  trace.meta = meta_from_json(require(doc, "meta", ""));
  const json& proj = require(doc, "projector", "");
  trace.projector.norm_kind =
      parse_norm_kind(proj.value("norm_kind", std::string("rms")));
  trace.projector.norm_epsilon = proj.value("norm_epsilon", 1e-5f);
  const json& unembed = require(proj, "unembedding", "projector.");
  if (unembed.is_array() && !unembed.empty() && unembed.front().is_array()) {
    for (std::size_t i = 0; i < unembed.size(); ++i) {
      auto row = float_array(unembed[i], "projector.unembedding[" +
                                             std::to_string(i) + "]");
      trace.projector.unembedding.insert(trace.projector.unembedding.end(),
                                         row.begin(), row.end());
    }
  } else {
    trace.projector.unembedding = float_array(unembed, "projector.unembedding");
  }
  trace.projector.norm_scale =
      float_array(require(proj, "norm_scale", "projector."),
                  "projector.norm_scale");
  if (proj.contains("norm_bias")) {
    trace.projector.norm_bias =
        float_array(proj.at("norm_bias"), "projector.norm_bias");
  }
  if (doc.contains("prompt_token_ids")) {
    trace.prompt_token_ids =
        field_as<std::vector<TokenId>>(doc, "prompt_token_ids", "");
  }
  const int heads = std::max(trace.meta.num_heads, 1);
  const int first = trace.meta.stored_layers ? trace.meta.stored_layers->first : 0;
  if (doc.contains("steps")) {
    const json& steps = doc.at("steps");
    if (!steps.is_array()) throw FormatError("'steps' must be an array");
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const json& js = steps[t];
      const std::string path = "steps[" + std::to_string(t) + "].";
      StepTrace step;
      step.step_index = js.value("step_index", static_cast<int>(t));
      const json& attn = require(js, "attn", path);
      if (!attn.is_array()) throw FormatError("'" + path + "attn' must be an array");
      for (std::size_t i = 0; i < attn.size(); ++i) {
        AttentionMap map;
        map.layer = first + static_cast<int>(i) / heads;
        map.head = static_cast<int>(i) % heads;
        map.weights = float_array(attn[i], path + "attn[" + std::to_string(i) + "]");
        step.attn.push_back(std::move(map));
      }
      const json& hidden = require(js, "hidden", path);
      if (!hidden.is_array()) throw FormatError("'" + path + "hidden' must be an array");
      for (std::size_t l = 0; l < hidden.size(); ++l) {
        step.hidden.push_back(
            float_array(hidden[l], path + "hidden[" + std::to_string(l) + "]"));
      }
      step.final_logits =
          float_array(require(js, "final_logits", path), path + "final_logits");
      step.emitted_token = field_as<TokenId>(js, "emitted_token", path);
      trace.steps.push_back(std::move(step));
    }
  }
  throw_if_invalid(trace);
  return trace;
}

}  // namespace

DecodingTrace decode_trace(std::span<const std::byte> bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto c = std::to_integer<unsigned char>(bytes[i]);
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') break;
    ++i;
  }
  if (i < bytes.size() && std::to_integer<unsigned char>(bytes[i]) == '{') {
    return decode_json(std::string_view(
        reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  return decode_binary(bytes);
}

DecodingTrace read_trace(std::istream& in) {
  std::vector<char> raw{std::istreambuf_iterator<char>(in),
                        std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("failed to read trace source");
  return decode_trace(std::as_bytes(std::span<const char>(raw)));
}

void write_trace_file(const DecodingTrace& trace,
                      const std::filesystem::path& path) {
  const auto bytes = encode_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DecodingTrace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_trace(in);
}

std::string trace_to_json_text(const DecodingTrace& trace) {
  throw_if_invalid(trace);
  json doc;
  doc["meta"] = meta_to_json(trace.meta);
  json proj{{"norm_kind", norm_kind_name(trace.projector.norm_kind)},
            {"norm_epsilon", trace.projector.norm_epsilon},
            {"unembedding", trace.projector.unembedding},
            {"norm_scale", trace.projector.norm_scale}};
  if (trace.projector.norm_bias) proj["norm_bias"] = *trace.projector.norm_bias;
  doc["projector"] = std::move(proj);
  doc["prompt_token_ids"] = trace.prompt_token_ids;
  json steps = json::array();
  for (const auto& step : trace.steps) {
    json attn = json::array();
    for (const auto& map : step.attn) attn.push_back(map.weights);
    steps.push_back({{"step_index", step.step_index},
                     {"attn", std::move(attn)},
                     {"hidden", step.hidden},
                     {"final_logits", step.final_logits},
                     {"emitted_token", step.emitted_token}});
  }
  doc["steps"] = std::move(steps);
  return doc.dump();
}

}  // namespace saked
