// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "saked/error.hpp"
#include "saked/trace.hpp"
#include "support/trace_gen.hpp"

using namespace saked;

namespace {

std::string fixture(const char* name) {
  return std::string(SAKED_FIXTURE_DIR) + "/" + name;
}

bool has_violation(const DecodingTrace& t, const std::string& field) {
  for (const auto& v : validate_trace(t)) {
    if (v.field == field) return true;
  }
  return false;
}

DecodingTrace small() { return read_trace_file(fixture("trace_small.json")); }

}  // namespace

TEST_CASE("JSON fixture loads with layer-major attention labels") {
  const auto t = small();
  CHECK(t.meta.num_layers == 3);
  CHECK(t.steps.size() == 2);
  CHECK(t.projector.unembedding.size() == 10);
  CHECK(t.projector.unembedding[4] == -1.0f);
  const auto& map = attention_at(t.meta, t.steps[0], 2, 1);
  CHECK(map.layer == 2);
  CHECK(map.head == 1);
  CHECK(map.weights[0] == 0.7f);
  CHECK(hidden_at(t.meta, t.steps[1], 2)[0] == 1.0f);
  CHECK(layer_attention(t.meta, t.steps[0], 1).size() == 2);
  CHECK_THROWS_AS(hidden_at(t.meta, t.steps[0], 3), InvalidInputError);
  CHECK(validate_trace(t).empty());
}

TEST_CASE("bad attention count is rejected with its field path") {
  try {
    read_trace_file(fixture("trace_bad_attn.json"));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "steps[1].attn");
  }
}

TEST_CASE("validate_trace names offending fields") {
  auto t = small();
  t.meta.num_layers = 1;
  CHECK(has_violation(t, "meta.num_layers"));

  t = small();
  t.steps[0].attn[3].weights[2] = -0.5f;
  CHECK(has_violation(t, "steps[0].attn[3].weights[2]"));

  t = small();
  t.steps[1].hidden[0].pop_back();
  CHECK(has_violation(t, "steps[1].hidden[0]"));

  t = small();
  t.steps[0].final_logits[1] = NAN;
  CHECK(has_violation(t, "steps[0].final_logits"));

  t = small();
  t.steps[1].emitted_token = 5;
  CHECK(has_violation(t, "steps[1].emitted_token"));

  t = small();
  t.projector.unembedding.pop_back();
  CHECK(has_violation(t, "projector.unembedding"));

  t = small();
  t.prompt_token_ids.push_back(0);
  CHECK(has_violation(t, "prompt_token_ids"));

  t = small();
  t.meta.eos_token = 9;
  CHECK(has_violation(t, "meta.eos_token"));

  t = small();
  t.meta.stored_layers = LayerRange{1, 3};
  CHECK(has_violation(t, "meta.stored_layers"));

  t = small();
  t.steps[1].step_index = 4;
  CHECK(has_violation(t, "steps[1].step_index"));
}

TEST_CASE("binary round trip is field-exact") {
  const auto t = small();
  const auto bytes = encode_trace(t);
  REQUIRE(bytes.size() > 10);
  CHECK(std::memcmp(bytes.data(), "SKTR", 4) == 0);
  CHECK(decode_trace(bytes) == t);

  std::stringstream ss;
  CHECK(write_trace(t, ss) == bytes.size());
  CHECK(read_trace(ss) == t);
}

TEST_CASE("JSON text round trip is field-exact") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto t = testing::random_trace(rng);
    const std::string text = trace_to_json_text(t);
    CHECK(decode_trace(std::as_bytes(std::span(text.data(), text.size()))) == t);
  }
}

TEST_CASE("corrupt containers fail with format errors") {
  const auto bytes = encode_trace(small());

  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_WITH_AS(decode_trace(bad), doctest::Contains("magic"), FormatError);

  bad = bytes;
  bad[4] = std::byte{2};
  CHECK_THROWS_WITH_AS(decode_trace(bad), doctest::Contains("version 2"),
                       FormatError);

  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_WITH_AS(decode_trace(bad), doctest::Contains("truncated"),
                       FormatError);

  bad = bytes;
  bad.push_back(std::byte{0});
  CHECK_THROWS_WITH_AS(decode_trace(bad), doctest::Contains("trailing"),
                       FormatError);

  bad.assign(bytes.begin(), bytes.begin() + 7);
  CHECK_THROWS_AS(decode_trace(bad), FormatError);

  // Non-finite payload values pass parsing but fail validation.
  bad = bytes;
  const float nan = NAN;
  std::memcpy(bad.data() + bad.size() - 8, &nan, 4);
  CHECK_THROWS_AS(decode_trace(bad), ValidationError);
}

TEST_CASE("zero-step trace is valid") {
  auto t = small();
  t.steps.clear();
  CHECK(validate_trace(t).empty());
  CHECK(decode_trace(encode_trace(t)) == t);
}

TEST_CASE("stored layer window shifts accessors") {
  auto t = small();
  t.meta.stored_layers = LayerRange{1, 2};
  for (auto& s : t.steps) {
    s.attn.erase(s.attn.begin(), s.attn.begin() + 2);
    s.hidden.erase(s.hidden.begin());
  }
  REQUIRE(validate_trace(t).empty());
  CHECK(attention_at(t.meta, t.steps[0], 2, 1).weights[0] == 0.7f);
  CHECK_THROWS_AS(attention_at(t.meta, t.steps[0], 0, 0), InvalidInputError);
  CHECK(decode_trace(encode_trace(t)) == t);
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(read_trace_file("/nonexistent/trace.sktr"), IoError);
}

TEST_CASE("norm kinds parse by name") {
  CHECK(parse_norm_kind("layer") == NormKind::kLayer);
  CHECK(std::string(norm_kind_name(NormKind::kNone)) == "none");
  CHECK_THROWS_AS(parse_norm_kind("batch"), FormatError);
}
