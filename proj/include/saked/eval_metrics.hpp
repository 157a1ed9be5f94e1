// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saked::eval {

/// synonym -> canonical label. Canonical labels map to themselves
/// implicitly and may not appear as synonyms of another label.
struct SynonymMap {
  std::map<std::string, std::string> to_canonical;

  std::string canonicalize(const std::string& label) const;
};

/// Each non-empty line lists a canonical label followed by its synonyms,
/// separated by tabs or commas ("person, people, persons"). Lines starting
/// with '#' are ignored. Returns the map and the canonical labels in file
/// order.
struct SynonymFile {
  SynonymMap synonyms;
  std::vector<std::string> canonical_labels;
};
SynonymFile parse_synonyms(std::string_view text);

/// Lexicon matching over lower-cased word tokens; multi-word terms match
/// greedily (longest first). Only canonical labels contained in `lexicon`
/// are returned, in first-mention order.
std::vector<std::string> extract_mentions(std::string_view caption,
                                          std::span<const std::string> lexicon,
                                          const SynonymMap& synonyms,
                                          bool dedup = true);

struct AnnotationSet {
  std::map<std::string, std::set<std::string>> objects;  // canonical labels
  SynonymMap synonyms;
};

/// Builds an annotation set, mapping labels through `synonyms`. Throws
/// ValidationError if the synonym map is not closed (a canonical label is
/// itself a synonym of another label).
AnnotationSet make_annotations(
    const std::map<std::string, std::vector<std::string>>& raw,
    SynonymMap synonyms);

struct CaptionRecord {
  std::string image_id;
  std::string caption;
  std::vector<std::string> extracted_mentions;
};

struct CaptionChair {
  std::string image_id;
  std::vector<std::string> mentions;
  std::vector<std::string> hallucinated;
};

struct ChairResult {
  double chair_i = 0.0;
  double chair_s = 0.0;
  std::size_t captions = 0;
  std::size_t hallucinated_captions = 0;
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::vector<CaptionChair> per_caption;
};

/// Instance- and caption-level hallucination ratios over pre-extracted
/// mentions. An empty corpus scores 0.
ChairResult chair_scores(std::span<const CaptionRecord> captions,
                         const AnnotationSet& annotations);

enum class Answer { kYes, kNo };
enum class PopeSplit { kRandom, kPopular, kAdversarial };

inline constexpr std::array<PopeSplit, 3> kAllPopeSplits = {
    PopeSplit::kRandom, PopeSplit::kPopular, PopeSplit::kAdversarial};

const char* split_name(PopeSplit split);
PopeSplit parse_split(std::string_view name);
/// "yes"/"no", or free text under the usual convention: an answer that
/// contains the word "no" or "not" is negative, anything else positive.
Answer parse_answer(std::string_view text);

struct BinaryQARecord {
  std::string image_id;
  std::string object;
  Answer gold = Answer::kNo;
  Answer predicted = Answer::kNo;
  PopeSplit split = PopeSplit::kRandom;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  double precision() const noexcept;
  double recall() const noexcept;
  double f1() const noexcept;
  double accuracy() const noexcept;
  double yes_ratio() const noexcept;
};

struct PopeResult {
  std::map<PopeSplit, ConfusionCounts> per_split;
  double average_f1 = 0.0;  // unweighted mean over the requested splits
};

/// F1 with "yes" as the positive class. Every requested split must have at
/// least one record.
PopeResult pope_f1(std::span<const BinaryQARecord> records,
                   std::span<const PopeSplit> splits = kAllPopeSplits);

// --- file formats ---------------------------------------------------------

/// JSON-lines {"image_id": ..., "caption": "..."}; errors carry line numbers.
std::vector<CaptionRecord> parse_captions_jsonl(std::string_view text);
/// {"<image_id>": ["label", ...], ...}
std::map<std::string, std::vector<std::string>> parse_annotations_json(
    std::string_view text);
/// JSON-lines {"image_id", "object", "gold", "predicted", "split"}.
std::vector<BinaryQARecord> parse_pope_jsonl(std::string_view text);

}  // namespace saked::eval
