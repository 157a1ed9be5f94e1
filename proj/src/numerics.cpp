// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "saked/error.hpp"

namespace saked {

ProbDist ProbDist::from_values(std::vector<double> values, DistDomain domain) {
  if (values.empty()) throw InvalidInputError("probability vector is empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidInputError("probability entry " + std::to_string(i) +
                              " is negative or non-finite");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    throw InvalidInputError("probability vector sums to " +
                            std::to_string(sum));
  }
  return ProbDist(std::move(values), domain);
}

std::vector<double> to_double(std::span<const float> values) {
  return std::vector<double>(values.begin(), values.end());
}

ProbDist softmax(std::span<const double> logits, double temperature,
                 DistDomain domain) {
  if (logits.empty()) throw InvalidInputError("softmax of empty vector");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInputError("softmax temperature must be positive");
  }
  double max_logit = -INFINITY;
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInputError("non-finite logit");
    max_logit = std::max(max_logit, x / temperature);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / temperature - max_logit);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbDist::from_values(std::move(out), domain);
}

double entropy(const ProbDist& p, LogBase base) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  if (base == LogBase::kTwo) h /= std::log(2.0);
  return std::max(h, 0.0);
}

double jsd(const ProbDist& p, const ProbDist& q) {
  if (p.dim() != q.dim()) {
    throw InvalidInputError("jsd dimension mismatch: " +
                            std::to_string(p.dim()) + " vs " +
                            std::to_string(q.dim()));
  }
  // Each term is written so that swapping p and q permutes the summands in
  // place; this keeps the result bit-symmetric.
  double total = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double a = p[i];
    const double b = q[i];
    const double m = 0.5 * (a + b);
    double term = 0.0;
    if (a > 0.0) term += a * std::log2(a / m);
    if (b > 0.0) term += b * std::log2(b / m);
    total += term;
  }
  return std::clamp(0.5 * total, 0.0, 1.0);
}

double soft_iou(std::span<const double> a, std::span<const double> b,
                double epsilon) {
  if (a.size() != b.size()) {
    throw InvalidInputError("soft_iou length mismatch: " +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  if (!(epsilon >= 0.0)) throw InvalidInputError("soft_iou epsilon < 0");
  double inter = 0.0;
  double uni = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += std::min(a[i], b[i]);
    uni += std::max(a[i], b[i]);
  }
  const double denom = uni + epsilon;
  if (denom <= 0.0) return 0.0;
  return inter / denom;
}

double soft_iou(const AttentionMap& a, const AttentionMap& b,
                double epsilon) {
  const auto da = to_double(a.weights);
  const auto db = to_double(b.weights);
  return soft_iou(da, db, epsilon);
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores,
                                       std::size_t k) {
  if (k > scores.size()) {
    throw InvalidInputError("top-k with k=" + std::to_string(k) +
                            " exceeds length " +
                            std::to_string(scores.size()));
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto before = [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return i < j;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), before);
  idx.resize(k);
  return idx;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInputError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

NormalizedWeights normalize_weights(std::span<const double> weights,
                                    DistDomain domain) {
  if (weights.empty()) throw InvalidInputError("empty weight vector");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidInputError("attention weight negative or non-finite");
    }
    sum += w;
  }
  std::vector<double> out(weights.size());
  if (sum <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return {ProbDist::from_values(std::move(out), domain), true};
  }
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / sum;
  return {ProbDist::from_values(std::move(out), domain), false};
}

NormalizedWeights normalize_weights(std::span<const float> weights,
                                    DistDomain domain) {
  const auto d = to_double(weights);
  return normalize_weights(std::span<const double>(d), domain);
}

std::vector<std::vector<double>> reshape_to_grid(
    std::span<const double> flat) {
  const auto side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(flat.size()))));
  if (side * side != flat.size() || flat.empty()) {
    throw InvalidInputError("map of length " + std::to_string(flat.size()) +
                            " is not a square grid");
  }
  std::vector<std::vector<double>> grid(side, std::vector<double>(side));
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) grid[r][c] = flat[r * side + c];
  }
  return grid;
}

}  // namespace saked
