// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/export.hpp"

#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace saked {
namespace {

using nlohmann::ordered_json;

std::string dump(const ordered_json& j) {
  // nlohmann prints doubles with max_digits10 already.
  return j.dump();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

ordered_json flags_json(const std::vector<std::string>& flags) {
  ordered_json arr = ordered_json::array();
  for (const auto& f : flags) arr.push_back(f);
  return arr;
}

}  // namespace

std::string report_to_json(const StabilityReport& report,
                           const SakedConfig& config) {
  ordered_json j;
  j["step"] = report.step_index;
  ordered_json layers = ordered_json::array();
  for (const auto& s : report.per_layer) {
    ordered_json l;
    l["layer"] = s.layer;
    l["chss"] = s.chss;
    l["clss"] = s.clss;
    l["ctss"] = s.ctss;
    l["kss"] = s.kss;
    l["selected_heads"] = s.selected_heads;
    layers.push_back(std::move(l));
  }
  j["per_layer"] = std::move(layers);
  j["l_pos"] = report.positive_layer;
  j["l_neg"] = report.negative_layer;
  j["flags"] = flags_json(report.flags);
  j["vas_basis"] = "visual_normalized";
  j["vas_entropy_sign"] = config.vas_entropy_sign;
  j["chss_scale"] = config.chss_pair_mean ? "pair_mean" : "k_k_minus_1";
  return dump(j);
}

std::string report_to_csv(const StabilityReport& report) {
  std::ostringstream os;
  os << "step,layer,chss,clss,ctss,kss,is_pos,is_neg\n";
  for (const auto& s : report.per_layer) {
    os << report.step_index << ',' << s.layer << ',' << num(s.chss) << ','
       << num(s.clss) << ',' << num(s.ctss) << ',' << num(s.kss) << ','
       << (s.layer == report.positive_layer ? 1 : 0) << ','
       << (s.layer == report.negative_layer ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string step_to_json_line(const StepOutcome& outcome) {
  ordered_json j;
  j["t"] = outcome.report.step_index;
  j["token_orig"] = outcome.revision.original_argmax;
  j["token_revised"] = outcome.revision.revised_token;
  j["l_pos"] = outcome.report.positive_layer;
  j["l_neg"] = outcome.report.negative_layer;
  ordered_json kss = ordered_json::array();
  for (const auto& s : outcome.report.per_layer) kss.push_back(s.kss);
  j["kss"] = std::move(kss);
  j["changed"] = outcome.revision.changed;
  j["flags"] = flags_json(outcome.report.flags);
  return dump(j);
}

std::string replay_to_csv(const ReplayResult& replay) {
  std::ostringstream os;
  os << "t,token_orig,token_revised,l_pos,l_neg,changed\n";
  for (const auto& s : replay.steps) {
    os << s.report.step_index << ',' << s.revision.original_argmax << ','
       << s.revision.revised_token << ',' << s.report.positive_layer << ','
       << s.report.negative_layer << ',' << (s.revision.changed ? 1 : 0)
       << '\n';
  }
  return os.str();
}

std::string chair_to_json(const eval::ChairResult& r) {
  ordered_json j;
  j["chair_i"] = r.chair_i;
  j["chair_s"] = r.chair_s;
  j["chair_i_percent"] = 100.0 * r.chair_i;
  j["chair_s_percent"] = 100.0 * r.chair_s;
  j["captions"] = r.captions;
  j["hallucinated_captions"] = r.hallucinated_captions;
  j["mentions"] = r.mentions;
  j["hallucinated_mentions"] = r.hallucinated_mentions;
  ordered_json per = ordered_json::array();
  for (const auto& c : r.per_caption) {
    ordered_json e;
    e["image_id"] = c.image_id;
    e["mentions"] = c.mentions;
    e["hallucinated"] = c.hallucinated;
    per.push_back(std::move(e));
  }
  j["per_caption"] = std::move(per);
  return dump(j);
}

std::string pope_to_json(const eval::PopeResult& r) {
  ordered_json j;
  ordered_json splits = ordered_json::object();
  for (const auto& [split, c] : r.per_split) {
    ordered_json e;
    e["tp"] = c.tp;
    e["fp"] = c.fp;
    e["tn"] = c.tn;
    e["fn"] = c.fn;
    e["precision"] = c.precision();
    e["recall"] = c.recall();
    e["f1"] = c.f1();
    e["accuracy"] = c.accuracy();
    e["yes_ratio"] = c.yes_ratio();
    splits[eval::split_name(split)] = std::move(e);
  }
  j["per_split"] = std::move(splits);
  j["average_f1"] = r.average_f1;
  j["average_f1_percent"] = 100.0 * r.average_f1;
  return dump(j);
}

}  // namespace saked
