// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace saked {

inline constexpr double kDefaultSoftIouEpsilon = 1e-8;
inline constexpr double kProbSumTolerance = 1e-6;

enum class DistDomain { kUnspecified, kVocab, kVisual };

enum class LogBase { kNatural, kTwo };

/// A normalized probability vector. Construction validates non-negativity
/// and unit mass (within kProbSumTolerance); instances are immutable.
class ProbDist {
 public:
  /// The one-point distribution {1}.
  ProbDist() : values_{1.0} {}

  static ProbDist from_values(std::vector<double> values,
                              DistDomain domain = DistDomain::kUnspecified);

  std::size_t dim() const noexcept { return values_.size(); }
  DistDomain domain() const noexcept { return domain_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  ProbDist(std::vector<double> values, DistDomain domain)
      : values_(std::move(values)), domain_(domain) {}

  std::vector<double> values_;
  DistDomain domain_ = DistDomain::kUnspecified;
};

/// Raw visual attention of one (layer, head) over the m visual tokens.
/// Weights are non-negative but not necessarily normalized.
struct AttentionMap {
  std::vector<float> weights;
  int layer = 0;
  int head = 0;

  friend bool operator==(const AttentionMap&, const AttentionMap&) = default;
};

std::vector<double> to_double(std::span<const float> values);

ProbDist softmax(std::span<const double> logits, double temperature = 1.0,
                 DistDomain domain = DistDomain::kVocab);

/// Shannon entropy with the 0 ln 0 = 0 convention.
double entropy(const ProbDist& p, LogBase base = LogBase::kNatural);

/// Jensen-Shannon divergence in bits, so the result lies in [0, 1].
double jsd(const ProbDist& p, const ProbDist& q);

/// ||min(a,b)||_1 / (||max(a,b)||_1 + epsilon). epsilon may be zero, in which
/// case two all-zero maps score 0.
double soft_iou(std::span<const double> a, std::span<const double> b,
                double epsilon = kDefaultSoftIouEpsilon);
double soft_iou(const AttentionMap& a, const AttentionMap& b,
                double epsilon = kDefaultSoftIouEpsilon);

/// Indices of the k largest scores, largest first; equal scores keep the
/// lower index first.
std::vector<std::size_t> top_k_indices(std::span<const double> scores,
                                       std::size_t k);

std::size_t argmax(std::span<const double> scores);

struct NormalizedWeights {
  ProbDist dist;
  bool degenerate = false;  // input summed to zero; dist is uniform
};

/// Renormalizes non-negative weights to unit mass. An all-zero input yields
/// the uniform distribution and sets `degenerate`.
NormalizedWeights normalize_weights(std::span<const double> weights,
                                    DistDomain domain = DistDomain::kVisual);
NormalizedWeights normalize_weights(std::span<const float> weights,
                                    DistDomain domain = DistDomain::kVisual);

/// Row-major side x side view of a flat map; side*side must equal the length.
std::vector<std::vector<double>> reshape_to_grid(std::span<const double> flat);

}  // namespace saked
