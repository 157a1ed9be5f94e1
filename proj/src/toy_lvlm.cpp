// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/toy_lvlm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "saked/error.hpp"

namespace saked::toy {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

constexpr float kNormEpsilon = 1e-5f;
constexpr float kPositionScale = 0.5f;
constexpr double kQkScale = 2.5;
constexpr int kMlpExpansion = 2;
constexpr double kUnembeddingScale = 3.0;
constexpr char kWeightMagic[4] = {'S', 'K', 'W', 'T'};
constexpr std::uint16_t kWeightVersion = 1;

}  // namespace

Xoshiro256StarStar::Xoshiro256StarStar(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Xoshiro256StarStar::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

float Xoshiro256StarStar::next_unit() {
  return static_cast<float>(next() >> 40) * 0x1.0p-24f;
}

void validate_spec(const ToyModelSpec& spec) {
  const auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(spec.num_layers, "num_layers");
  positive(spec.num_heads, "num_heads");
  positive(spec.hidden_dim, "hidden_dim");
  positive(spec.vocab_size, "vocab_size");
  positive(spec.num_visual_tokens, "num_visual_tokens");
  if (spec.num_layers < 2) throw ConfigError("toy model needs L >= 2");
  if (spec.hidden_dim % spec.num_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(spec.hidden_dim) +
                      " is not divisible by num_heads " +
                      std::to_string(spec.num_heads));
  }
  const int side = static_cast<int>(
      std::lround(std::sqrt(static_cast<double>(spec.num_visual_tokens))));
  if (side * side != spec.num_visual_tokens) {
    throw ConfigError("num_visual_tokens " +
                      std::to_string(spec.num_visual_tokens) +
                      " is not a perfect square");
  }
  if (spec.eos_token &&
      *spec.eos_token >= static_cast<TokenId>(spec.vocab_size)) {
    throw ConfigError("eos_token outside the vocabulary");
  }
}

ToyVisualInput make_visual_input(int num_visual_tokens, std::uint64_t seed) {
  // Distinct stream from the weights even when the seeds coincide.
  Xoshiro256StarStar rng(seed ^ 0x56495355414cULL);
  ToyVisualInput input;
  input.grid.resize(static_cast<std::size_t>(num_visual_tokens));
  for (auto& g : input.grid) {
    g = static_cast<float>(2.0 * static_cast<double>(rng.next_unit()) - 1.0);
  }
  return input;
}

const ToyWeights::Tensor& ToyWeights::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw InvalidInputError("no tensor named '" + name + "'");
}

ToyWeights generate_weights(const ToyModelSpec& spec) {
  validate_spec(spec);
  Xoshiro256StarStar rng(spec.seed);
  ToyWeights w;
  const int d = spec.hidden_dim;
  const auto uniform = [&](std::string name, std::vector<int> shape,
                           double scale) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    ToyWeights::Tensor t{std::move(name), std::move(shape), {}};
    t.values.resize(n);
    for (auto& v : t.values) {
      v = static_cast<float>(scale *
                             (2.0 * static_cast<double>(rng.next_unit()) - 1.0));
    }
    w.tensors.push_back(std::move(t));
  };
  const auto norm = [&](std::string name) {
    ToyWeights::Tensor t{std::move(name), {d}, {}};
    t.values.resize(static_cast<std::size_t>(d));
    for (auto& v : t.values) {
      v = static_cast<float>(
          1.0 + 0.1 * (2.0 * static_cast<double>(rng.next_unit()) - 1.0));
    }
    w.tensors.push_back(std::move(t));
  };
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const int f = kMlpExpansion * d;

  uniform("token_embedding", {spec.vocab_size, d}, 1.0);
  uniform("visual_direction", {d}, 1.0);
  uniform("visual_position", {spec.num_visual_tokens, d}, 0.5);
  for (int l = 0; l < spec.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    norm(p + "attn_norm");
    uniform(p + "wq", {d, d}, kQkScale * inv_sqrt_d);
    uniform(p + "wk", {d, d}, kQkScale * inv_sqrt_d);
    uniform(p + "wv", {d, d}, inv_sqrt_d);
    uniform(p + "wo", {d, d}, inv_sqrt_d);
    norm(p + "mlp_norm");
    uniform(p + "w_up", {f, d}, inv_sqrt_d);
    uniform(p + "w_down", {d, f}, 1.0 / std::sqrt(static_cast<double>(f)));
  }
  norm("final_norm");
  uniform("unembedding", {spec.vocab_size, d}, kUnembeddingScale * inv_sqrt_d);
  return w;
}

ToyModel::ToyModel(ToyModelSpec spec, ToyWeights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  bind();
}

// Layer views point into weights_, so copies must rebind.
ToyModel::ToyModel(const ToyModel& other)
    : spec_(other.spec_), weights_(other.weights_) {
  bind();
}

ToyModel& ToyModel::operator=(const ToyModel& other) {
  if (this != &other) {
    spec_ = other.spec_;
    weights_ = other.weights_;
    bind();
  }
  return *this;
}

ToyModel ToyModel::build(const ToyModelSpec& spec) {
  if (spec.weight_init == WeightInit::kFromFile) {
    ToyModelSpec loaded = spec;
    ToyWeights w = load_weights(spec.weight_file, loaded);
    validate_spec(loaded);
    return ToyModel(std::move(loaded), std::move(w));
  }
  return ToyModel(spec, generate_weights(spec));
}

void ToyModel::bind() {
  const int d = spec_.hidden_dim;
  const int f = kMlpExpansion * d;
  const auto expect = [&](const std::string& name,
                          std::size_t n) -> const float* {
    const auto& t = weights_.get(name);
    if (t.values.size() != n) {
      throw FormatError("tensor '" + name + "' has " +
                        std::to_string(t.values.size()) + " values, expected " +
                        std::to_string(n));
    }
    return t.values.data();
  };
  const auto dd = static_cast<std::size_t>(d);
  token_embedding_ = expect("token_embedding",
                            static_cast<std::size_t>(spec_.vocab_size) * dd);
  visual_direction_ = expect("visual_direction", dd);
  visual_position_ = expect(
      "visual_position", static_cast<std::size_t>(spec_.num_visual_tokens) * dd);
  layers_.clear();
  for (int l = 0; l < spec_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Layer layer{};
    layer.attn_norm = expect(p + "attn_norm", dd);
    layer.wq = expect(p + "wq", dd * dd);
    layer.wk = expect(p + "wk", dd * dd);
    layer.wv = expect(p + "wv", dd * dd);
    layer.wo = expect(p + "wo", dd * dd);
    layer.mlp_norm = expect(p + "mlp_norm", dd);
    layer.w_up = expect(p + "w_up", static_cast<std::size_t>(f) * dd);
    layer.w_down = expect(p + "w_down", dd * static_cast<std::size_t>(f));
    layers_.push_back(layer);
  }
  final_norm_ = expect("final_norm", dd);
  unembedding_ = expect("unembedding",
                        static_cast<std::size_t>(spec_.vocab_size) * dd);

  projector_.norm_kind = NormKind::kRms;
  projector_.norm_epsilon = kNormEpsilon;
  projector_.unembedding = weights_.get("unembedding").values;
  projector_.norm_scale = weights_.get("final_norm").values;
  projector_.norm_bias.reset();
}

namespace {

// f32 kernels; sums accumulate left to right from 0.
void rms_norm(const float* x, const float* scale, int d, float* out) {
  float ms = 0.0f;
  for (int j = 0; j < d; ++j) ms += x[j] * x[j];
  ms /= static_cast<float>(d);
  const float inv = 1.0f / std::sqrt(ms + kNormEpsilon);
  for (int j = 0; j < d; ++j) out[j] = x[j] * inv * scale[j];
}

void matvec(const float* w, const float* x, int rows, int cols, float* out) {
  for (int i = 0; i < rows; ++i) {
    const float* row = w + static_cast<std::size_t>(i) * cols;
    float acc = 0.0f;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

float position_encoding(int pos, int j, int d) {
  const int pair = j / 2;
  const double freq =
      std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(d));
  const double angle = static_cast<double>(pos) * freq;
  return static_cast<float>(kPositionScale *
                            (j % 2 == 0 ? std::sin(angle) : std::cos(angle)));
}

}  // namespace

StepTrace ToyModel::forward_step(const ToyVisualInput& visual,
                                 std::span<const TokenId> history,
                                 ForwardDebug* debug) const {
  const int d = spec_.hidden_dim;
  const int heads = spec_.num_heads;
  const int dh = d / heads;
  const int m = spec_.num_visual_tokens;
  const int f = kMlpExpansion * d;
  if (visual.grid.size() != static_cast<std::size_t>(m)) {
    throw InvalidInputError("visual input has " +
                            std::to_string(visual.grid.size()) +
                            " features, model expects " + std::to_string(m));
  }
  const int n_pos = m + static_cast<int>(history.size());
  const auto at = [d](std::vector<float>& buf, int p) {
    return buf.data() + static_cast<std::size_t>(p) * d;
  };

  std::vector<float> x(static_cast<std::size_t>(n_pos) * d);
  for (int p = 0; p < n_pos; ++p) {
    float* xp = at(x, p);
    if (p < m) {
      const float g = visual.grid[static_cast<std::size_t>(p)];
      const float* pos = visual_position_ + static_cast<std::size_t>(p) * d;
      for (int j = 0; j < d; ++j) xp[j] = g * visual_direction_[j] + pos[j];
    } else {
      const TokenId tok = history[static_cast<std::size_t>(p - m)];
      if (tok >= static_cast<TokenId>(spec_.vocab_size)) {
        throw InvalidInputError("token id " + std::to_string(tok) +
                                " outside the vocabulary");
      }
      const float* e = token_embedding_ + static_cast<std::size_t>(tok) * d;
      for (int j = 0; j < d; ++j) xp[j] = e[j];
    }
    for (int j = 0; j < d; ++j) xp[j] += position_encoding(p, j, d);
  }

  StepTrace step;
  step.attn.reserve(static_cast<std::size_t>(spec_.num_layers * heads));
  step.hidden.reserve(static_cast<std::size_t>(spec_.num_layers));
  if (debug != nullptr) debug->attention_row_sums.clear();

  std::vector<float> normed(static_cast<std::size_t>(n_pos) * d);
  std::vector<float> q(normed.size()), k(normed.size()), v(normed.size());
  std::vector<float> mixed(static_cast<std::size_t>(d));
  std::vector<float> proj(static_cast<std::size_t>(d));
  std::vector<float> up(static_cast<std::size_t>(f));
  std::vector<float> scores(static_cast<std::size_t>(n_pos));
  const float score_scale = 1.0f / std::sqrt(static_cast<float>(dh));

  for (int l = 0; l < spec_.num_layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    for (int p = 0; p < n_pos; ++p) {
      rms_norm(at(x, p), layer.attn_norm, d, at(normed, p));
      matvec(layer.wq, at(normed, p), d, d, at(q, p));
      matvec(layer.wk, at(normed, p), d, d, at(k, p));
      matvec(layer.wv, at(normed, p), d, d, at(v, p));
    }
    // Causal attention, computed for every query position since later
    // layers consume all of them.
    std::vector<float> x_next = x;
    for (int i = 0; i < n_pos; ++i) {
      const bool last = i == n_pos - 1;
      for (int h = 0; h < heads; ++h) {
        const float* qi = at(q, i) + h * dh;
        float max_score = -INFINITY;
        for (int j = 0; j <= i; ++j) {
          const float* kj = at(k, j) + h * dh;
          float dot = 0.0f;
          for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          scores[static_cast<std::size_t>(j)] = dot * score_scale;
          max_score = std::max(max_score, scores[static_cast<std::size_t>(j)]);
        }
        float sum = 0.0f;
        for (int j = 0; j <= i; ++j) {
          auto& s = scores[static_cast<std::size_t>(j)];
          s = std::exp(s - max_score);
          sum += s;
        }
        for (int j = 0; j <= i; ++j) scores[static_cast<std::size_t>(j)] /= sum;
        for (int c = 0; c < dh; ++c) {
          float acc = 0.0f;
          for (int j = 0; j <= i; ++j) {
            acc += scores[static_cast<std::size_t>(j)] * at(v, j)[h * dh + c];
          }
          mixed[static_cast<std::size_t>(h * dh + c)] = acc;
        }
        if (last) {
          AttentionMap map;
          map.layer = l;
          map.head = h;
          const int visible = std::min(m, i + 1);
          map.weights.assign(scores.begin(), scores.begin() + visible);
          map.weights.resize(static_cast<std::size_t>(m), 0.0f);
          step.attn.push_back(std::move(map));
          if (debug != nullptr) {
            double row = 0.0;
            for (int j = 0; j <= i; ++j) row += scores[static_cast<std::size_t>(j)];
            debug->attention_row_sums.push_back(row);
          }
        }
      }
      matvec(layer.wo, mixed.data(), d, d, proj.data());
      float* xi = at(x_next, i);
      for (int j = 0; j < d; ++j) xi[j] += proj[static_cast<std::size_t>(j)];
    }
    x = std::move(x_next);

    for (int p = 0; p < n_pos; ++p) {
      float* xp = at(x, p);
      rms_norm(xp, layer.mlp_norm, d, at(normed, p));
      matvec(layer.w_up, at(normed, p), f, d, up.data());
      for (auto& u : up) u = u / (1.0f + std::exp(-u));
      matvec(layer.w_down, up.data(), d, f, proj.data());
      for (int j = 0; j < d; ++j) xp[j] += proj[static_cast<std::size_t>(j)];
    }
    const float* last_hidden = at(x, n_pos - 1);
    step.hidden.emplace_back(last_hidden, last_hidden + d);
  }

  // The output head accumulates in double and rounds once, so the stored
  // logits are within half an f32 ulp of the exact head.
  const float* last = at(x, n_pos - 1);
  double ms = 0.0;
  for (int j = 0; j < d; ++j) ms += static_cast<double>(last[j]) * last[j];
  const double inv = 1.0 / std::sqrt(ms / d + static_cast<double>(kNormEpsilon));
  std::vector<double> final_normed(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    final_normed[static_cast<std::size_t>(j)] = last[j] * inv * final_norm_[j];
  }
  step.final_logits.resize(static_cast<std::size_t>(spec_.vocab_size));
  for (int v = 0; v < spec_.vocab_size; ++v) {
    const float* row = unembedding_ + static_cast<std::size_t>(v) * d;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += row[j] * final_normed[static_cast<std::size_t>(j)];
    step.final_logits[static_cast<std::size_t>(v)] = static_cast<float>(acc);
  }
  return step;
}

ModelMeta ToyModel::meta(int num_prompt_tokens) const {
  ModelMeta meta;
  meta.num_layers = spec_.num_layers;
  meta.num_heads = spec_.num_heads;
  meta.vocab_size = spec_.vocab_size;
  meta.num_visual_tokens = spec_.num_visual_tokens;
  meta.num_prompt_tokens = num_prompt_tokens;
  meta.hidden_dim = spec_.hidden_dim;
  std::vector<std::string> strings;
  strings.reserve(static_cast<std::size_t>(spec_.vocab_size));
  for (int i = 0; i < spec_.vocab_size; ++i) {
    strings.push_back("tok" + std::to_string(i));
  }
  meta.token_strings = std::move(strings);
  meta.eos_token = spec_.eos_token;
  meta.source = "toy-lvlm seed=" + std::to_string(spec_.seed);
  return meta;
}

void save_weights(const ToyModel& model, const std::filesystem::path& path) {
  const auto& spec = model.spec();
  nlohmann::json header;
  header["spec"] = {{"num_layers", spec.num_layers},
                    {"num_heads", spec.num_heads},
                    {"hidden_dim", spec.hidden_dim},
                    {"vocab_size", spec.vocab_size},
                    {"num_visual_tokens", spec.num_visual_tokens},
                    {"seed", spec.seed}};
  if (spec.eos_token) header["spec"]["eos_token"] = *spec.eos_token;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : model.weights().tensors) {
    table.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  std::vector<char> buf(kWeightMagic, kWeightMagic + 4);
  const auto put_u = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u(kWeightVersion, 2);
  put_u(text.size(), 4);
  buf.insert(buf.end(), text.begin(), text.end());
  for (const auto& t : model.weights().tensors) {
    for (float v : t.values) put_u(std::bit_cast<std::uint32_t>(v), 4);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ToyWeights load_weights(const std::filesystem::path& path, ToyModelSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file '" + path.string() + "'");
  const std::vector<unsigned char> raw{std::istreambuf_iterator<char>(in),
                                       std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (raw.size() - pos < n) {
      throw FormatError("truncated weight file '" + path.string() + "'");
    }
  };
  const auto get_u = [&](int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(raw[pos++]) << (8 * i);
    return v;
  };
  need(4);
  if (std::memcmp(raw.data(), kWeightMagic, 4) != 0) {
    throw FormatError("'" + path.string() + "' is not an SKWT weight file");
  }
  pos = 4;
  if (get_u(2) != kWeightVersion) throw FormatError("unsupported weight file version");
  const auto header_len = static_cast<std::size_t>(get_u(4));
  need(header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.begin() + static_cast<std::ptrdiff_t>(pos),
                                   raw.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    pos += header_len;
    const auto& s = header.at("spec");
    spec.num_layers = s.at("num_layers").get<int>();
    spec.num_heads = s.at("num_heads").get<int>();
    spec.hidden_dim = s.at("hidden_dim").get<int>();
    spec.vocab_size = s.at("vocab_size").get<int>();
    spec.num_visual_tokens = s.at("num_visual_tokens").get<int>();
    spec.seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("eos_token")) spec.eos_token = s.at("eos_token").get<TokenId>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad weight file header: " + std::string(e.what()));
  }
  ToyWeights w;
  for (const auto& entry : header.at("tensors")) {
    ToyWeights::Tensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int s : t.shape) {
      if (s <= 0) throw FormatError("tensor '" + t.name + "' has a bad shape");
      n *= static_cast<std::size_t>(s);
    }
    need(n * 4);
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(get_u(4)));
    w.tensors.push_back(std::move(t));
  }
  if (pos != raw.size()) throw FormatError("trailing bytes in weight file");
  spec.weight_init = WeightInit::kFromFile;
  spec.weight_file = path;
  return w;
}

ToySession::ToySession(const ToyModel& model, ToyVisualInput visual,
                       std::vector<TokenId> prompt)
    : model_(&model), visual_(std::move(visual)), prompt_(std::move(prompt)) {
  if (prompt_.empty()) throw InvalidInputError("prompt must not be empty");
  for (TokenId t : prompt_) {
    if (t >= static_cast<TokenId>(model.spec().vocab_size)) {
      throw InvalidInputError("prompt token " + std::to_string(t) +
                              " outside the vocabulary");
    }
  }
  meta_ = model.meta(static_cast<int>(prompt_.size()));
}

StepTrace ToySession::forward(std::span<const TokenId> generated) const {
  std::vector<TokenId> history(prompt_);
  history.insert(history.end(), generated.begin(), generated.end());
  return model_->forward_step(visual_, history);
}

DecodingTrace generate_trace(const ToyModel& model, const ToyVisualInput& visual,
                             std::span<const TokenId> prompt, int steps,
                             const std::optional<SakedConfig>& saked) {
  if (steps < 0) throw InvalidInputError("steps must be >= 0");
  ToySession session(model, visual,
                     std::vector<TokenId>(prompt.begin(), prompt.end()));
  LiveResult run = saked ? live_decode(session, *saked, steps)
                         : greedy_decode(session, steps);
  DecodingTrace trace;
  trace.meta = session.meta();
  trace.projector = model.projector();
  trace.prompt_token_ids.assign(prompt.begin(), prompt.end());
  trace.steps = std::move(run.traces);
  return trace;
}

}  // namespace saked::toy
