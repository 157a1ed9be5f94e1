// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "saked/error.hpp"
#include "saked/numerics.hpp"
#include "support/trace_gen.hpp"

using namespace saked;

namespace {

ProbDist dist(std::vector<double> v) { return ProbDist::from_values(std::move(v)); }

}  // namespace

// Expected values below come from tests/oracles/numerics_oracle.py (mpmath,
// 40 digits).
TEST_CASE("softmax matches high-precision values") {
  const std::vector<double> z{1, 2, 3};
  const auto p = softmax(z);
  CHECK(p[0] == doctest::Approx(0.090030573170380457998).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.24472847105479765247).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(0.66524095577482188953).epsilon(1e-15));
  CHECK(p.domain() == DistDomain::kVocab);
}

TEST_CASE("softmax survives huge logits and rejects bad input") {
  const std::vector<double> z{1000.0, 1000.0, -1000.0};
  const auto p = softmax(z);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  CHECK(p[2] == 0.0);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), InvalidInputError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, NAN}), InvalidInputError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), InvalidInputError);
  CHECK_THROWS_AS(softmax(z, 0.0), InvalidInputError);
}

TEST_CASE("softmax temperature sharpens") {
  const std::vector<double> z{0.0, 1.0};
  CHECK(softmax(z, 0.5)[1] > softmax(z, 1.0)[1]);
}

TEST_CASE("entropy") {
  CHECK(entropy(dist({0.5, 0.25, 0.25})) ==
        doctest::Approx(1.0397207708399179641).epsilon(1e-15));
  CHECK(entropy(dist({0.5, 0.25, 0.25}), LogBase::kTwo) ==
        doctest::Approx(1.5).epsilon(1e-15));
  CHECK(entropy(dist({1.0, 0.0})) == 0.0);
}

TEST_CASE("jsd values and edge cases") {
  CHECK(jsd(dist({0.7, 0.3}), dist({0.3, 0.7})) ==
        doctest::Approx(0.11870910076930738178).epsilon(1e-14));
  CHECK(jsd(dist({1, 0}), dist({0, 1})) == 1.0);
  CHECK(jsd(dist({0.2, 0.8}), dist({0.2, 0.8})) == 0.0);
  CHECK_THROWS_AS(jsd(dist({1.0}), dist({0.5, 0.5})), InvalidInputError);
}

TEST_CASE("soft_iou") {
  const std::vector<double> a{0.2, 0.8}, b{0.5, 0.5};
  CHECK(soft_iou(a, b) == doctest::Approx(0.53846153431952665908).epsilon(1e-15));
  CHECK(soft_iou(a, a, 0.0) == 1.0);
  const std::vector<double> z{0.0, 0.0};
  CHECK(soft_iou(z, z, 0.0) == 0.0);
  CHECK(soft_iou(z, z) == 0.0);
  CHECK_THROWS_AS(soft_iou(a, std::vector<double>{1.0}), InvalidInputError);
  CHECK_THROWS_AS(soft_iou(a, b, -1.0), InvalidInputError);

  AttentionMap ma{{0.2f, 0.8f}, 0, 0}, mb{{0.5f, 0.5f}, 0, 1};
  CHECK(soft_iou(ma, mb) == doctest::Approx(0.538461534).epsilon(1e-7));
}

TEST_CASE("ProbDist validation") {
  CHECK_THROWS_AS(dist({0.5, 0.6}), InvalidInputError);
  CHECK_THROWS_AS(dist({1.5, -0.5}), InvalidInputError);
  CHECK_THROWS_AS(dist({}), InvalidInputError);
  CHECK_THROWS_AS(dist({NAN, 1.0}), InvalidInputError);
  CHECK_NOTHROW(dist({0.5, 0.5 + 1e-9}));
  const ProbDist one;
  CHECK(one.dim() == 1);
  CHECK(one[0] == 1.0);
}

TEST_CASE("top_k and argmax break ties toward the lower index") {
  const std::vector<double> s{1.0, 3.0, 3.0, 2.0, 3.0};
  const auto top = top_k_indices(s, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0] == 1);
  CHECK(top[1] == 2);
  CHECK(top[2] == 4);
  CHECK(argmax(s) == 1);
  CHECK(top_k_indices(s, 0).empty());
  CHECK_THROWS_AS(top_k_indices(s, 6), InvalidInputError);
  CHECK_THROWS_AS(argmax(std::vector<double>{}), InvalidInputError);
}

TEST_CASE("normalize_weights") {
  const std::vector<float> w{1.0f, 3.0f};
  const auto n = normalize_weights(w);
  CHECK_FALSE(n.degenerate);
  CHECK(n.dist[0] == 0.25);
  CHECK(n.dist.domain() == DistDomain::kVisual);
  const auto z = normalize_weights(std::vector<float>{0, 0, 0, 0});
  CHECK(z.degenerate);
  CHECK(z.dist[2] == 0.25);
  CHECK_THROWS_AS(normalize_weights(std::vector<float>{-1.0f, 2.0f}),
                  InvalidInputError);
  CHECK_THROWS_AS(normalize_weights(std::vector<float>{}), InvalidInputError);
}

TEST_CASE("reshape_to_grid") {
  const std::vector<double> flat{1, 2, 3, 4};
  const auto g = reshape_to_grid(flat);
  REQUIRE(g.size() == 2);
  CHECK(g[1][0] == 3);
  CHECK_THROWS_AS(reshape_to_grid(std::vector<double>{1, 2, 3}), InvalidInputError);
}

TEST_CASE("randomized: jsd is bit-symmetric and bounded") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng() % 40;
    const auto p = dist(testing::random_probs(rng, n));
    const auto q = dist(testing::random_probs(rng, n));
    const double a = jsd(p, q);
    CHECK(a == jsd(q, p));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(jsd(p, p) == 0.0);
  }
}
