// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/eval_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "saked/error.hpp"

namespace saked::eval {
namespace {

using nlohmann::json;

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string normalize_label(std::string_view label) {
  return join_words(words_of(label));
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0
                  : static_cast<double>(num) / static_cast<double>(den);
}

// Splits JSON-lines input, skipping blank lines; yields (line_no, object).
template <typename Fn>
void for_each_json_line(std::string_view text, const char* what, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                      : nl - pos);
    ++line_no;
    if (!trim(line).empty()) {
      const std::string field =
          std::string(what) + ":line " + std::to_string(line_no);
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError(field + ": " + e.what());
      }
      if (!obj.is_object()) throw FormatError(field + ": expected an object");
      try {
        fn(field, obj);
      } catch (const json::exception& e) {
        throw FormatError(field + ": " + e.what());
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

Answer answer_field(const json& obj, const char* key,
                    const std::string& field) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    throw ValidationError(field, std::string("missing string field '") + key +
                                     "'");
  }
  try {
    return parse_answer(obj.at(key).get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError(field, std::string(key) + ": " + e.what());
  }
}

}  // namespace

std::string SynonymMap::canonicalize(const std::string& label) const {
  const std::string key = normalize_label(label);
  auto it = to_canonical.find(key);
  return it == to_canonical.end() ? key : it->second;
}

SynonymFile parse_synonyms(std::string_view text) {
  SynonymFile out;
  std::set<std::string> canonical;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : trimmed) {
      if (c == ',' || c == '\t') {
        fields.push_back(normalize_label(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(normalize_label(cur));
    std::erase_if(fields, [](const std::string& f) { return f.empty(); });
    if (fields.empty()) continue;
    const std::string& head = fields.front();
    if (canonical.insert(head).second) out.canonical_labels.push_back(head);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (fields[i] == head) continue;
      auto [it, inserted] = out.synonyms.to_canonical.emplace(fields[i], head);
      if (!inserted && it->second != head) {
        throw FormatError("synonyms:line " + std::to_string(line_no) + ": '" +
                          fields[i] + "' already maps to '" + it->second + "'");
      }
    }
  }
  return out;
}

std::vector<std::string> extract_mentions(std::string_view caption,
                                          std::span<const std::string> lexicon,
                                          const SynonymMap& synonyms,
                                          bool dedup) {
  if (lexicon.empty()) throw InvalidInputError("extraction lexicon is empty");

  // Surface form (as word sequence) -> canonical label.
  std::set<std::string> allowed;
  for (const auto& label : lexicon) allowed.insert(synonyms.canonicalize(label));
  std::unordered_map<std::string, std::string> surface;
  std::size_t longest = 1;
  auto add_surface = [&](const std::string& form, const std::string& canon) {
    if (form.empty() || !allowed.count(canon)) return;
    surface.emplace(form, canon);
    longest = std::max(longest, words_of(form).size());
  };
  for (const auto& label : lexicon) {
    add_surface(normalize_label(label), synonyms.canonicalize(label));
  }
  for (const auto& [syn, canon] : synonyms.to_canonical) add_surface(syn, canon);

  const std::vector<std::string> words = words_of(caption);
  std::vector<std::string> mentions;
  std::set<std::string> seen;
  std::size_t i = 0;
  while (i < words.size()) {
    bool matched = false;
    const std::size_t max_n = std::min(longest, words.size() - i);
    for (std::size_t n = max_n; n >= 1; --n) {
      std::string phrase = words[i];
      for (std::size_t j = 1; j < n; ++j) phrase += " " + words[i + j];
      auto it = surface.find(phrase);
      if (it != surface.end()) {
        if (!dedup || seen.insert(it->second).second) {
          mentions.push_back(it->second);
        }
        i += n;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return mentions;
}

AnnotationSet make_annotations(
    const std::map<std::string, std::vector<std::string>>& raw,
    SynonymMap synonyms) {
  for (const auto& [syn, canon] : synonyms.to_canonical) {
    auto it = synonyms.to_canonical.find(canon);
    if (it != synonyms.to_canonical.end() && it->second != canon) {
      throw ValidationError("synonym_map." + syn,
                            "canonical label '" + canon +
                                "' is itself a synonym of '" + it->second +
                                "'");
    }
  }
  AnnotationSet out;
  for (const auto& [image_id, labels] : raw) {
    auto& objects = out.objects[image_id];
    for (const auto& label : labels) {
      const std::string canon = synonyms.canonicalize(label);
      if (!canon.empty()) objects.insert(canon);
    }
  }
  out.synonyms = std::move(synonyms);
  return out;
}

ChairResult chair_scores(std::span<const CaptionRecord> captions,
                         const AnnotationSet& annotations) {
  ChairResult r;
  r.per_caption.reserve(captions.size());
  for (const auto& cap : captions) {
    auto it = annotations.objects.find(cap.image_id);
    if (it == annotations.objects.end()) {
      throw ValidationError("image_id=" + cap.image_id,
                            "not present in the annotations");
    }
    CaptionChair c;
    c.image_id = cap.image_id;
    for (const auto& m : cap.extracted_mentions) {
      const std::string canon = annotations.synonyms.canonicalize(m);
      c.mentions.push_back(canon);
      if (!it->second.count(canon)) c.hallucinated.push_back(canon);
    }
    r.mentions += c.mentions.size();
    r.hallucinated_mentions += c.hallucinated.size();
    if (!c.hallucinated.empty()) ++r.hallucinated_captions;
    r.per_caption.push_back(std::move(c));
  }
  r.captions = captions.size();
  r.chair_i = ratio(r.hallucinated_mentions, r.mentions);
  r.chair_s = ratio(r.hallucinated_captions, r.captions);
  return r;
}

const char* split_name(PopeSplit split) {
  switch (split) {
    case PopeSplit::kRandom:
      return "random";
    case PopeSplit::kPopular:
      return "popular";
    case PopeSplit::kAdversarial:
      return "adversarial";
  }
  return "unknown";
}

PopeSplit parse_split(std::string_view name) {
  const std::string n = normalize_label(name);
  for (PopeSplit s : kAllPopeSplits) {
    if (n == split_name(s)) return s;
  }
  throw ValidationError("split", "unknown split '" + std::string(name) +
                                     "' (expected random|popular|adversarial)");
}

Answer parse_answer(std::string_view text) {
  const auto words = words_of(text);
  if (words.empty()) {
    throw ValidationError("answer", "empty answer");
  }
  for (const auto& w : words) {
    if (w == "no" || w == "not") return Answer::kNo;
  }
  return Answer::kYes;
}

double ConfusionCounts::precision() const noexcept { return ratio(tp, tp + fp); }
double ConfusionCounts::recall() const noexcept { return ratio(tp, tp + fn); }
double ConfusionCounts::f1() const noexcept {
  // 2PR/(P+R) written over counts so hand-computed fixtures match exactly.
  return ratio(2 * tp, 2 * tp + fp + fn);
}
double ConfusionCounts::accuracy() const noexcept {
  return ratio(tp + tn, total());
}
double ConfusionCounts::yes_ratio() const noexcept {
  return ratio(tp + fp, total());
}

PopeResult pope_f1(std::span<const BinaryQARecord> records,
                   std::span<const PopeSplit> splits) {
  if (splits.empty()) throw ValidationError("splits", "no split requested");
  PopeResult r;
  for (PopeSplit s : splits) r.per_split[s];
  for (const auto& rec : records) {
    auto it = r.per_split.find(rec.split);
    if (it == r.per_split.end()) continue;
    auto& c = it->second;
    const bool gold_yes = rec.gold == Answer::kYes;
    const bool pred_yes = rec.predicted == Answer::kYes;
    if (pred_yes && gold_yes) ++c.tp;
    else if (pred_yes) ++c.fp;
    else if (gold_yes) ++c.fn;
    else ++c.tn;
  }
  double sum = 0.0;
  for (const auto& [split, counts] : r.per_split) {
    if (counts.total() == 0) {
      throw ValidationError(std::string("split=") + split_name(split),
                            "no records for requested split");
    }
    sum += counts.f1();
  }
  r.average_f1 = sum / static_cast<double>(r.per_split.size());
  return r;
}

std::vector<CaptionRecord> parse_captions_jsonl(std::string_view text) {
  std::vector<CaptionRecord> out;
  for_each_json_line(text, "captions", [&](const std::string& field,
                                           const json& obj) {
    if (!obj.contains("image_id") || !obj.contains("caption") ||
        !obj.at("caption").is_string()) {
      throw ValidationError(field, "expected {image_id, caption}");
    }
    CaptionRecord rec;
    const auto& id = obj.at("image_id");
    rec.image_id = id.is_string() ? id.get<std::string>() : id.dump();
    rec.caption = obj.at("caption").get<std::string>();
    out.push_back(std::move(rec));
  });
  return out;
}

std::map<std::string, std::vector<std::string>> parse_annotations_json(
    std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotations: ") + e.what());
  }
  if (!doc.is_object()) {
    throw FormatError("annotations: expected {image_id: [labels]}");
  }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [id, labels] : doc.items()) {
    if (!labels.is_array()) {
      throw ValidationError("annotations." + id, "expected a label list");
    }
    auto& dst = out[id];
    for (const auto& l : labels) {
      if (!l.is_string()) {
        throw ValidationError("annotations." + id, "labels must be strings");
      }
      dst.push_back(l.get<std::string>());
    }
  }
  return out;
}

std::vector<BinaryQARecord> parse_pope_jsonl(std::string_view text) {
  std::vector<BinaryQARecord> out;
  for_each_json_line(text, "pope", [&](const std::string& field,
                                       const json& obj) {
    BinaryQARecord rec;
    if (!obj.contains("image_id") || !obj.contains("object") ||
        !obj.at("object").is_string()) {
      throw ValidationError(field, "expected image_id and object");
    }
    const auto& id = obj.at("image_id");
    rec.image_id = id.is_string() ? id.get<std::string>() : id.dump();
    rec.object = obj.at("object").get<std::string>();
    rec.gold = answer_field(obj, "gold", field);
    rec.predicted = answer_field(obj, "predicted", field);
    if (!obj.contains("split") || !obj.at("split").is_string()) {
      throw ValidationError(field, "missing string field 'split'");
    }
    try {
      rec.split = parse_split(obj.at("split").get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(field, e.what());
    }
    out.push_back(std::move(rec));
  });
  return out;
}

}  // namespace saked::eval
