// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any gating criterion fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reference/reference_saked.hpp"
#include "saked/decoder.hpp"
#include "saked/eval_metrics.hpp"
#include "saked/numerics.hpp"
#include "saked/stability.hpp"
#include "saked/toy_lvlm.hpp"
#include "saked/trace.hpp"
#include "support/trace_gen.hpp"

namespace {

using namespace saked;
using Clock = std::chrono::steady_clock;

constexpr double kTol = 1e-9;
constexpr double kTightTol = 1e-12;
constexpr double kOracleTol = 1e-6;
constexpr double kNumericsSeconds = 5.0;
constexpr double kScoreRangeSeconds = 30.0;
constexpr double kNoiseRate = 0.95;

int g_failures = 0;

void report(const char* name, bool ok, const std::string& detail,
            bool gating = true) {
  std::printf("%s %s: %s%s\n", ok ? "PASS" : "FAIL", name, detail.c_str(),
              gating ? "" : " (non-gating)");
  if (gating && !ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<DecodingTrace> toy_traces(std::uint64_t seed, int count, int steps) {
  std::mt19937_64 rng(seed);
  std::vector<DecodingTrace> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(testing::toy_trace(testing::random_toy_case(rng), steps));
  }
  return out;
}

// --- 1 ---------------------------------------------------------------------

void numerics_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> dim(2, 64);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  int bad_shift = 0, bad_sym = 0, bad_range = 0, bad_ident = 0,
      bad_iou_scale = 0, bad_iou_range = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto z = testing::random_logits(rng, dim(rng), 20.0);
    auto zs = z;
    const double c = shift(rng);
    for (auto& x : zs) x += c;
    const auto a = softmax(z), b = softmax(zs);
    for (std::size_t j = 0; j < a.dim(); ++j) {
      if (std::abs(a[j] - b[j]) > kTightTol) { ++bad_shift; break; }
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = dim(rng);
    const auto p = ProbDist::from_values(testing::random_probs(rng, n));
    const auto q = ProbDist::from_values(testing::random_probs(rng, n));
    const double pq = jsd(p, q), qp = jsd(q, p);
    if (std::abs(pq - qp) > kTightTol) ++bad_sym;
    if (!(pq >= 0.0 && pq <= 1.0)) ++bad_range;
    if (std::abs(jsd(p, p)) > kTightTol) ++bad_ident;
    // Distinct distributions must score strictly above zero.
    if (p != q && !(pq > 0.0)) ++bad_ident;
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = dim(rng);
    const auto x = testing::random_weights(rng, n);
    const auto y = testing::random_weights(rng, n);
    const double c = scale(rng);
    auto xs = x, ys = y;
    for (auto& v : xs) v *= c;
    for (auto& v : ys) v *= c;
    // Scale equivariance holds exactly without the stabilizer.
    if (std::abs(soft_iou(x, y, 0.0) - soft_iou(xs, ys, 0.0)) > kTol) ++bad_iou_scale;
    for (double v : {soft_iou(x, y), soft_iou(xs, ys), soft_iou(x, x, 0.0)}) {
      if (!(v >= 0.0 && v <= 1.0)) ++bad_iou_range;
    }
    if (std::any_of(x.begin(), x.end(), [](double v) { return v > 0; }) &&
        std::abs(soft_iou(x, x, 0.0) - 1.0) > kTightTol) {
      ++bad_iou_range;
    }
  }
  const double secs = seconds_since(t0);
  const int bad = bad_shift + bad_sym + bad_range + bad_ident + bad_iou_scale +
                  bad_iou_range;
  report("numerics", bad == 0 && secs < kNumericsSeconds,
         "3x1000 cases; violations shift=" + std::to_string(bad_shift) +
             " jsd_sym=" + std::to_string(bad_sym) +
             " jsd_range=" + std::to_string(bad_range) +
             " jsd_identity=" + std::to_string(bad_ident) +
             " iou_scale=" + std::to_string(bad_iou_scale) +
             " iou_range=" + std::to_string(bad_iou_range) +
             fmt(" in %.2fs", secs));
}

// --- 2 ---------------------------------------------------------------------

void score_range_suite(const std::vector<DecodingTrace>& traces) {
  const auto t0 = Clock::now();
  const SakedConfig config;
  std::size_t checked = 0, bad = 0, bad_first = 0;
  double chss_max = 0, clss_min = 1, ctss_min = 1;
  for (const auto& tr : traces) {
    for (int s = 0; s < static_cast<int>(tr.steps.size()); ++s) {
      const auto r = build_report(tr, s, config);
      for (const auto& l : r.per_layer) {
        ++checked;
        chss_max = std::max(chss_max, l.chss);
        clss_min = std::min(clss_min, l.clss);
        ctss_min = std::min(ctss_min, l.ctss);
        if (!(l.chss >= 0 && l.chss <= 0.5)) ++bad;
        if (!(l.clss >= 0 && l.clss <= 1)) ++bad;
        if (!(l.ctss >= 0 && l.ctss <= 1)) ++bad;
        if (s == 0 && l.ctss != 1.0) ++bad_first;
      }
    }
  }
  const double secs = seconds_since(t0);
  report("score_ranges", bad == 0 && bad_first == 0 && secs < kScoreRangeSeconds,
         std::to_string(traces.size()) + " traces, " + std::to_string(checked) +
             " layer scores; out of range=" + std::to_string(bad) +
             " ctss(t=0)!=1: " + std::to_string(bad_first) +
             fmt("; max chss %.4f min clss %.4f min ctss %.4f", chss_max,
                 clss_min, ctss_min) +
             fmt(" in %.2fs", secs));
}

// --- 3 ---------------------------------------------------------------------

void reduction_suite(const std::vector<DecodingTrace>& traces) {
  std::size_t steps = 0, bad_alpha = 0, bad_beta = 0;
  SakedConfig no_contrast;
  no_contrast.alpha = 0.0;
  SakedConfig no_revision;
  no_revision.beta = 0.0;
  for (const auto& tr : traces) {
    const auto a0 = replay_decode(tr, no_contrast);
    const auto b0 = replay_decode(tr, no_revision);
    for (std::size_t s = 0; s < tr.steps.size(); ++s) {
      ++steps;
      const auto& step = a0.steps[s];
      const auto pos = tr.projector.project(
          hidden_at(tr.meta, tr.steps[s], step.report.positive_layer));
      if (!(step.revision.contrastive_dist == softmax(pos))) ++bad_alpha;
      const auto orig = to_double(tr.steps[s].final_logits);
      if (b0.steps[s].revision.revised_token != argmax(orig)) ++bad_beta;
    }
  }

  std::mt19937_64 rng(303);
  int bad_live = 0;
  for (int i = 0; i < 20; ++i) {
    const auto c = testing::random_toy_case(rng);
    toy::ToyModelSpec spec;
    spec.seed = c.model_seed;
    const auto model = toy::ToyModel::build(spec);
    const toy::ToySession session(
        model, toy::make_visual_input(spec.num_visual_tokens, c.image_seed),
        c.prompt);
    if (live_decode(session, identity_config(), 12).tokens !=
        greedy_decode(session, 12).tokens) {
      ++bad_live;
    }
  }
  report("reductions", bad_alpha == 0 && bad_beta == 0 && bad_live == 0,
         std::to_string(steps) + " steps; alpha=0 bitwise mismatches=" +
             std::to_string(bad_alpha) + " beta=0 non-argmax=" +
             std::to_string(bad_beta) + "; identity live vs greedy 20 prompts, "
             "mismatches=" + std::to_string(bad_live));
}

// --- 4 ---------------------------------------------------------------------

void containment_suite() {
  std::mt19937_64 rng(404);
  const double betas[] = {0.4, 0.6, 0.8, 1.0, 1.2};
  const double alphas[] = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t steps = 0, violations = 0, revised = 0;
  while (steps < 10000) {
    const auto tr = testing::toy_trace(testing::random_toy_case(rng), 10);
    for (int rep = 0; rep < 4; ++rep) {
      SakedConfig c;
      c.alpha = alphas[rng() % 5];
      c.beta = betas[rng() % 5];
      c.q = 1 + static_cast<int>(rng() % 70);  // may exceed |V|
      c.k_heads = 2 + static_cast<int>(rng() % 3);
      const int lo = 1 + static_cast<int>(rng() % 4);
      c.candidate_layers.clear();
      for (int l = lo; l <= 5; ++l) c.candidate_layers.push_back(l);
      const auto replay = replay_decode(tr, c);
      for (std::size_t s = 0; s < tr.steps.size(); ++s) {
        ++steps;
        const auto p = softmax(to_double(tr.steps[s].final_logits));
        const auto tok = replay.steps[s].revision.revised_token;
        if (replay.steps[s].revision.changed) ++revised;
        // Rank of the revised token under the original distribution.
        std::size_t above = 0;
        for (std::size_t v = 0; v < p.dim(); ++v) {
          if (p[v] > p[tok] || (p[v] == p[tok] && v < tok)) ++above;
        }
        if (above >= static_cast<std::size_t>(c.q)) ++violations;
      }
    }
  }
  report("candidate_containment", violations == 0,
         std::to_string(steps) + " steps (" + std::to_string(revised) +
             " revised); outside top-q=" + std::to_string(violations));
}

// --- 5 ---------------------------------------------------------------------

void oracle_suite() {
  std::mt19937_64 rng(505);
  double worst = 0;
  std::size_t steps = 0, token_mismatch = 0, select_mismatch = 0,
              live_mismatch = 0, live_tokens = 0;
  for (int i = 0; i < 20; ++i) {
    const auto tc = testing::random_toy_case(rng);
    SakedConfig c;
    c.alpha = 0.1 * (1 + static_cast<int>(rng() % 5));
    c.beta = 0.4 + 0.2 * static_cast<int>(rng() % 5);
    c.q = 1 + static_cast<int>(rng() % 30);
    c.k_heads = 2 + static_cast<int>(rng() % 3);
    c.vas_entropy_sign = rng() % 2 ? 1 : -1;
    c.lambda1 = 0.5 + (rng() % 100) / 100.0;
    c.lambda2 = 0.5 + (rng() % 100) / 100.0;
    c.lambda3 = 0.5 + (rng() % 100) / 100.0;
    ref::Params p;
    p.lambda = {c.lambda1, c.lambda2, c.lambda3};
    p.alpha = c.alpha;
    p.beta = c.beta;
    p.q = c.q;
    p.k = *c.k_heads;
    p.vas_sign = c.vas_entropy_sign;
    p.layers = {3, 4, 5};

    const auto tr = testing::toy_trace(tc, 8);
    for (std::size_t s = 0; s < tr.steps.size(); ++s) {
      ++steps;
      const auto want = ref::step(tr.meta, tr.projector, tr.steps[s],
                                  s ? &tr.steps[s - 1] : nullptr, p);
      const auto rep = build_report(tr, static_cast<int>(s), c);
      const auto got = saked_step(tr, static_cast<int>(s), c);
      for (std::size_t l = 0; l < want.layers.size(); ++l) {
        const auto& w = want.layers[l];
        for (const auto* r : {&rep.per_layer[l], &got.report.per_layer[l]}) {
          worst = std::max({worst, std::abs(w.chss - r->chss),
                            std::abs(w.clss - r->clss),
                            std::abs(w.ctss - r->ctss),
                            std::abs(w.kss - r->kss)});
          if (r->selected_heads != w.heads) ++select_mismatch;
        }
      }
      if (rep.positive_layer != want.l_pos || rep.negative_layer != want.l_neg)
        ++select_mismatch;
      for (std::size_t v = 0; v < want.contrastive.size(); ++v) {
        worst = std::max(worst, std::abs(want.contrastive[v] -
                                         got.revision.contrastive_dist[v]));
      }
      if (got.revision.original_argmax != want.original ||
          got.revision.revised_token != want.revised) {
        ++token_mismatch;
      }
    }

    toy::ToyModelSpec spec;
    spec.seed = tc.model_seed;
    const auto model = toy::ToyModel::build(spec);
    const toy::ToySession session(
        model, toy::make_visual_input(spec.num_visual_tokens, tc.image_seed),
        tc.prompt);
    const auto forward = [&](const std::vector<TokenId>& g) {
      return session.forward(g);
    };
    const auto want = ref::live(session.meta(), session.projector(), forward, p, 10);
    const auto got = live_decode(session, c, 10).tokens;
    live_tokens += want.size();
    if (want != got) ++live_mismatch;
  }
  report("oracle_equivalence",
         worst <= kOracleTol && token_mismatch == 0 && select_mismatch == 0 &&
             live_mismatch == 0,
         "20 traces, " + std::to_string(steps) + " steps" +
             fmt("; max score diff %.3g", worst) + "; token mismatches=" +
             std::to_string(token_mismatch) + " selection mismatches=" +
             std::to_string(select_mismatch) + "; live 20 runs (" +
             std::to_string(live_tokens) + " tokens), mismatching runs=" +
             std::to_string(live_mismatch));
}

// --- 6 ---------------------------------------------------------------------

void selection_invariance_suite(const std::vector<DecodingTrace>& traces) {
  std::mt19937_64 rng(606);
  std::size_t steps = 0, changed = 0;
  for (const auto& tr : traces) {
    SakedConfig base;
    if (rng() % 2) {
      base.lambda1 = 0.1 + (rng() % 200) / 100.0;
      base.lambda2 = 0.1 + (rng() % 200) / 100.0;
      base.lambda3 = 0.1 + (rng() % 200) / 100.0;
    }
    for (double c : {0.1, 10.0}) {
      SakedConfig scaled = base;
      scaled.lambda1 *= c;
      scaled.lambda2 *= c;
      scaled.lambda3 *= c;
      for (int s = 0; s < static_cast<int>(tr.steps.size()); ++s) {
        ++steps;
        const auto a = build_report(tr, s, base);
        const auto b = build_report(tr, s, scaled);
        if (a.positive_layer != b.positive_layer ||
            a.negative_layer != b.negative_layer) {
          ++changed;
        }
      }
    }
  }
  report("selection_invariance", changed == 0,
         std::to_string(steps) + " step comparisons at c in {0.1, 10}; "
         "changed (l+, l-)=" + std::to_string(changed));
}

// --- 7 ---------------------------------------------------------------------

std::vector<std::byte> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [](char c) { return static_cast<std::byte>(c); });
  return out;
}

void round_trip_suite() {
  std::mt19937_64 rng(707);
  int bad = 0, bad_json = 0;
  for (int i = 0; i < 100; ++i) {
    const auto t = testing::random_trace(rng);
    if (!(decode_trace(encode_trace(t)) == t)) ++bad;
    std::istringstream in(trace_to_json_text(t));
    if (!(read_trace(in) == t)) ++bad_json;
  }

  testing::ToyCase golden;
  golden.model_seed = 42;
  golden.image_seed = 42;
  golden.prompt = {1, 2, 3, 4};
  const auto first = encode_trace(testing::toy_trace(golden, 8));
  const auto second = encode_trace(testing::toy_trace(golden, 8));
  const auto frozen =
      read_bytes(std::string(SAKED_FIXTURE_DIR) + "/golden/toy_seed42.sktr");
  report("trace_round_trip",
         bad == 0 && bad_json == 0 && first == second && first == frozen,
         "100 random traces; binary mismatches=" + std::to_string(bad) +
             " json mismatches=" + std::to_string(bad_json) +
             "; seed-42 trace " + std::to_string(first.size()) + " bytes, " +
             (first == second ? "stable" : "UNSTABLE") + " across runs, " +
             (first == frozen ? "matches" : "differs from") + " frozen copy");
}

// --- 8 ---------------------------------------------------------------------

std::string slurp(const std::string& name) {
  std::ifstream in(std::string(SAKED_FIXTURE_DIR) + "/eval/" + name);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void chair_pope_suite() {
  using namespace saked::eval;
  const auto syn = parse_synonyms(slurp("synonyms.txt"));
  const auto ann = make_annotations(parse_annotations_json(slurp("annotations.json")),
                                    syn.synonyms);
  auto caps = parse_captions_jsonl(slurp("captions.jsonl"));
  for (auto& c : caps) {
    c.extracted_mentions =
        extract_mentions(c.caption, syn.canonical_labels, syn.synonyms);
  }
  const auto chair = chair_scores(caps, ann);
  // Hand counts: 44 mentions, 8 hallucinated, 6 of 20 captions affected.
  const bool chair_ok = chair.captions == 20 && chair.mentions == 44 &&
                        chair.hallucinated_mentions == 8 &&
                        chair.hallucinated_captions == 6 &&
                        chair.chair_i == 8.0 / 44.0 && chair.chair_s == 6.0 / 20.0;

  AnnotationSet small;
  small.objects["x"] = {"dog", "person"};
  small.objects["y"] = {"car", "bus"};
  const std::vector<CaptionRecord> five = {{"x", "", {"dog", "cat", "bird"}},
                                           {"y", "", {"car", "bus"}}};
  const auto ex = chair_scores(five, small);
  const bool example_ok = ex.chair_i == 0.4 && ex.chair_s == 0.5;

  const auto pope = pope_f1(parse_pope_jsonl(slurp("pope.jsonl")));
  const auto& r = pope.per_split.at(PopeSplit::kRandom);
  const auto& p = pope.per_split.at(PopeSplit::kPopular);
  const auto& a = pope.per_split.at(PopeSplit::kAdversarial);
  // Hand-built confusion matrices: (4,1,4,1), (5,2,3,0), (3,3,2,2).
  const bool pope_ok =
      r.tp == 4 && r.fp == 1 && r.tn == 4 && r.fn == 1 && p.tp == 5 &&
      p.fp == 2 && p.tn == 3 && p.fn == 0 && a.tp == 3 && a.fp == 3 &&
      a.tn == 2 && a.fn == 2 && r.f1() == 8.0 / 10.0 && p.f1() == 10.0 / 12.0 &&
      a.f1() == 6.0 / 11.0 &&
      std::abs(pope.average_f1 - 719.0 / 990.0) <= 1e-15;
  report("chair_pope", chair_ok && example_ok && pope_ok,
         fmt("chair_i %.6f chair_s %.2f on 20 captions; ", chair.chair_i,
             chair.chair_s) +
             fmt("worked example (%.1f, %.1f); ", ex.chair_i, ex.chair_s) +
             fmt("pope f1 %.6f/%.6f/%.6f", r.f1(), p.f1(), a.f1()) +
             fmt(" avg %.6f", pope.average_f1));
}

// --- 9 ---------------------------------------------------------------------

void noise_suite() {
  std::mt19937_64 rng(909);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const SakedConfig config;
  int trials = 0, lowest = 0;
  while (trials < 400) {
    auto tr = testing::toy_trace(testing::random_toy_case(rng), 4);
    const auto resolved = resolve_config(config, tr.meta);
    const int s = 1 + static_cast<int>(rng() % 3);
    const auto& layers = resolved.layers;
    const int target = layers[rng() % layers.size()];
    auto& step = tr.steps[s];
    const int first = tr.meta.stored_range().first;
    // Cross-head noise: each head gets its own sharply peaked random map.
    for (int h = 0; h < tr.meta.num_heads; ++h) {
      auto& w = step.attn[(target - first) * tr.meta.num_heads + h].weights;
      std::vector<double> z(w.size());
      for (auto& x : z) x = 4.0 * gauss(rng);
      const auto p = softmax(z);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<float>(p[j]);
    }
    // Cross-layer noise: a random hidden state of the same scale.
    auto& hidden = step.hidden[target - first];
    double rms = 0;
    for (float x : hidden) rms += double(x) * x;
    rms = std::sqrt(rms / hidden.size());
    for (auto& x : hidden) x = static_cast<float>(rms * gauss(rng));

    const auto r = build_report(tr, s, config);
    const double mine = r.scores_for(target).kss;
    bool ok = true;
    for (const auto& l : r.per_layer) {
      if (l.layer != target && !(mine < l.kss)) ok = false;
    }
    ++trials;
    if (ok) ++lowest;
  }
  const double rate = static_cast<double>(lowest) / trials;
  report("noise_direction", rate >= kNoiseRate,
         std::to_string(lowest) + "/" + std::to_string(trials) +
             fmt(" perturbed layers strictly lowest KSS (%.1f%%)", 100 * rate),
         false);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const auto traces = toy_traces(2024, 100, 8);
  numerics_suite();
  score_range_suite(traces);
  reduction_suite(traces);
  containment_suite();
  oracle_suite();
  selection_invariance_suite(traces);
  round_trip_suite();
  chair_pope_suite();
  noise_suite();
  std::printf("%d gating failure(s), %.1fs total\n", g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
