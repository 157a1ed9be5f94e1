// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

// Random trace and input generators shared by the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "saked/toy_lvlm.hpp"
#include "saked/trace.hpp"

namespace saked::testing {

inline std::vector<double> random_logits(std::mt19937_64& rng, std::size_t n,
                                         double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> out(n);
  for (auto& x : out) x = u(rng);
  return out;
}

// Non-negative weights with occasional exact zeros.
inline std::vector<double> random_weights(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& x : out) x = u(rng) < 0.1 ? 0.0 : u(rng);
  return out;
}

inline std::vector<double> random_probs(std::mt19937_64& rng, std::size_t n) {
  auto w = random_weights(rng, n);
  w[rng() % n] += 0.5;  // never all zero
  double sum = 0.0;
  for (double x : w) sum += x;
  for (auto& x : w) x /= sum;
  return w;
}

// Arbitrary valid trace with random dimensions and every optional field
// exercised at random; not produced by a model.
inline DecodingTrace random_trace(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::uniform_real_distribution<float> w01(0.0f, 1.0f);
  DecodingTrace t;
  auto& meta = t.meta;
  meta.num_layers = 2 + dim(rng);
  meta.num_heads = dim(rng);
  meta.vocab_size = 2 + dim(rng) * 3;
  meta.num_visual_tokens = dim(rng) * dim(rng);
  meta.hidden_dim = dim(rng) * 2;
  meta.num_prompt_tokens = dim(rng);
  meta.source = "random seed=" + std::to_string(rng() % 1000);
  if (rng() % 2) {
    std::vector<std::string> strings;
    for (int i = 0; i < meta.vocab_size; ++i) {
      strings.push_back(i % 5 == 0 ? "" : "t\"" + std::to_string(i) + "\xc3\xa9");
    }
    meta.token_strings = std::move(strings);
  }
  if (rng() % 2) meta.eos_token = static_cast<TokenId>(rng() % meta.vocab_size);
  if (rng() % 3 == 0) {
    const int first = static_cast<int>(rng() % meta.num_layers);
    const int last = first + static_cast<int>(rng() % (meta.num_layers - first));
    meta.stored_layers = LayerRange{first, last};
  }

  const auto d = static_cast<std::size_t>(meta.hidden_dim);
  const auto v = static_cast<std::size_t>(meta.vocab_size);
  auto& p = t.projector;
  const int kind = static_cast<int>(rng() % 3);
  p.norm_kind = kind == 0 ? NormKind::kRms : kind == 1 ? NormKind::kLayer
                                                       : NormKind::kNone;
  p.norm_epsilon = rng() % 2 ? 1e-5f : 1e-6f;
  p.unembedding.resize(v * d);
  for (auto& x : p.unembedding) x = u(rng);
  p.norm_scale.resize(d);
  for (auto& x : p.norm_scale) x = 1.0f + 0.1f * u(rng);
  if (rng() % 2) {
    p.norm_bias = std::vector<float>(d);
    for (auto& x : *p.norm_bias) x = 0.1f * u(rng);
  }
  for (int i = 0; i < meta.num_prompt_tokens; ++i) {
    t.prompt_token_ids.push_back(static_cast<TokenId>(rng() % v));
  }

  const auto range = meta.stored_range();
  const int steps = static_cast<int>(rng() % 5);
  for (int s = 0; s < steps; ++s) {
    StepTrace step;
    step.step_index = s;
    for (int l = range.first; l <= range.last; ++l) {
      for (int h = 0; h < meta.num_heads; ++h) {
        AttentionMap map;
        map.layer = l;
        map.head = h;
        map.weights.resize(static_cast<std::size_t>(meta.num_visual_tokens));
        for (auto& x : map.weights) x = rng() % 7 == 0 ? 0.0f : w01(rng);
        step.attn.push_back(std::move(map));
      }
      std::vector<float> hidden(d);
      for (auto& x : hidden) x = u(rng);
      step.hidden.push_back(std::move(hidden));
    }
    step.final_logits.resize(v);
    for (auto& x : step.final_logits) x = 4.0f * u(rng);
    step.emitted_token = static_cast<TokenId>(rng() % v);
    t.steps.push_back(std::move(step));
  }
  return t;
}

struct ToyCase {
  std::uint64_t model_seed = 42;
  std::uint64_t image_seed = 0;
  std::vector<TokenId> prompt;
};

inline ToyCase random_toy_case(std::mt19937_64& rng, int vocab = 64) {
  ToyCase c;
  c.model_seed = rng() % 5 == 0 ? 42 : rng() % 100000;
  c.image_seed = rng();
  const int n = 1 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) {
    c.prompt.push_back(static_cast<TokenId>(rng() % vocab));
  }
  return c;
}

// Greedy toy trace with the default dimensions.
inline DecodingTrace toy_trace(const ToyCase& c, int steps) {
  toy::ToyModelSpec spec;
  spec.seed = c.model_seed;
  const auto model = toy::ToyModel::build(spec);
  return toy::generate_trace(
      model, toy::make_visual_input(spec.num_visual_tokens, c.image_seed),
      c.prompt, steps);
}

}  // namespace saked::testing
