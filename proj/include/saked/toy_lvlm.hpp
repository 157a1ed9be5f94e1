// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saked/config.hpp"
#include "saked/decoder.hpp"
#include "saked/trace.hpp"

namespace saked::toy {

/// xoshiro256** seeded through splitmix64; see docs/toy-model.md for the
/// exact update equations.
class Xoshiro256StarStar {
 public:
  explicit Xoshiro256StarStar(std::uint64_t seed);

  std::uint64_t next();
  /// Top 24 bits scaled to [0, 1); exactly representable in f32.
  float next_unit();

 private:
  std::uint64_t s_[4];
};

enum class WeightInit { kSeededRandom, kFromFile };

struct ToyModelSpec {
  int num_layers = 6;
  int num_heads = 4;
  int hidden_dim = 32;
  int vocab_size = 64;
  int num_visual_tokens = 16;
  std::uint64_t seed = 42;
  WeightInit weight_init = WeightInit::kSeededRandom;
  std::filesystem::path weight_file;  // used with kFromFile
  std::optional<TokenId> eos_token;

  friend bool operator==(const ToyModelSpec&, const ToyModelSpec&) = default;
};

/// Throws ConfigError when dimensions are non-positive, d % H != 0, or m is
/// not a perfect square.
void validate_spec(const ToyModelSpec& spec);

struct ToyVisualInput {
  std::vector<float> grid;  // one feature per visual token
};

/// Synthetic image: m uniform features in [-1, 1) from its own PRNG stream.
ToyVisualInput make_visual_input(int num_visual_tokens, std::uint64_t seed);

/// Named f32 tensors in generation order.
struct ToyWeights {
  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;

    friend bool operator==(const Tensor&, const Tensor&) = default;
  };
  std::vector<Tensor> tensors;

  const Tensor& get(const std::string& name) const;
  friend bool operator==(const ToyWeights&, const ToyWeights&) = default;
};

ToyWeights generate_weights(const ToyModelSpec& spec);

/// Pre-norm decoder: visual prefix + text tokens -> L blocks of RMS-normed
/// multi-head attention and a SiLU MLP -> final RMS norm -> unembedding.
class ToyModel {
 public:
  static ToyModel build(const ToyModelSpec& spec);

  ToyModel(const ToyModel& other);
  ToyModel& operator=(const ToyModel& other);
  ToyModel(ToyModel&&) noexcept = default;
  ToyModel& operator=(ToyModel&&) noexcept = default;

  const ToyModelSpec& spec() const noexcept { return spec_; }
  const ToyWeights& weights() const noexcept { return weights_; }
  const LogitLensProjector& projector() const noexcept { return projector_; }

  /// Full-context attention row sums of the last position, per (layer, head);
  /// filled only when requested.
  struct ForwardDebug {
    std::vector<double> attention_row_sums;
  };

  /// One forward pass over [visual tokens, history]. emitted_token is 0.
  StepTrace forward_step(const ToyVisualInput& visual,
                         std::span<const TokenId> history,
                         ForwardDebug* debug = nullptr) const;

  ModelMeta meta(int num_prompt_tokens) const;

 private:
  struct Layer {
    const float* attn_norm;
    const float* wq;
    const float* wk;
    const float* wv;
    const float* wo;
    const float* mlp_norm;
    const float* w_up;
    const float* w_down;
  };

  ToyModel(ToyModelSpec spec, ToyWeights weights);
  void bind();

  ToyModelSpec spec_;
  ToyWeights weights_;
  LogitLensProjector projector_;
  std::vector<Layer> layers_;
  const float* token_embedding_ = nullptr;
  const float* visual_direction_ = nullptr;
  const float* visual_position_ = nullptr;
  const float* final_norm_ = nullptr;
  const float* unembedding_ = nullptr;
};

// Weight file: "SKWT", u16 version, u32 header length, JSON header (spec
// dimensions and tensor table), then each tensor's f32 values in order.
void save_weights(const ToyModel& model, const std::filesystem::path& path);
ToyWeights load_weights(const std::filesystem::path& path, ToyModelSpec& spec);

/// A toy model bound to one image and prompt.
class ToySession final : public GenerationModel {
 public:
  ToySession(const ToyModel& model, ToyVisualInput visual,
             std::vector<TokenId> prompt);

  const ModelMeta& meta() const override { return meta_; }
  const LogitLensProjector& projector() const override {
    return model_->projector();
  }
  std::span<const TokenId> prompt() const override { return prompt_; }
  StepTrace forward(std::span<const TokenId> generated) const override;

 private:
  const ToyModel* model_;
  ToyVisualInput visual_;
  std::vector<TokenId> prompt_;
  ModelMeta meta_;
};

/// Records a full trace; with a config the closed-loop SAKED policy picks
/// each token, otherwise greedy decoding does.
DecodingTrace generate_trace(const ToyModel& model, const ToyVisualInput& visual,
                             std::span<const TokenId> prompt, int steps,
                             const std::optional<SakedConfig>& saked = {});

}  // namespace saked::toy
