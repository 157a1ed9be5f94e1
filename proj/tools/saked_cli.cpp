// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

// saked: generate toy traces, score and replay them, decode live, and
// evaluate caption / yes-no hallucination corpora.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "saked/config.hpp"
#include "saked/decoder.hpp"
#include "saked/error.hpp"
#include "saked/eval_metrics.hpp"
#include "saked/export.hpp"
#include "saked/stability.hpp"
#include "saked/toy_lvlm.hpp"
#include "saked/trace.hpp"

namespace {

using saked::TokenId;

struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> preset;
  std::optional<double> lambda1, lambda2, lambda3, alpha, beta, epsilon;
  std::optional<int> q, k_heads, vas_sign;
  std::optional<std::string> layers;
  bool chss_pair_mean = false;
  bool protect_eos = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path,
                    "Config file (TOML or JSON); default $SAKED_CONFIG");
    app->add_option("--preset", preset, "Model preset (llava-1.5, toy, ...)");
    app->add_option("--lambda1", lambda1, "CHSS weight");
    app->add_option("--lambda2", lambda2, "CLSS weight");
    app->add_option("--lambda3", lambda3, "CTSS weight");
    app->add_option("--alpha", alpha, "Contrast strength");
    app->add_option("--beta", beta, "Revision weight");
    app->add_option("--q", q, "Revision candidate count");
    app->add_option("--k-heads", k_heads, "Visual heads per layer");
    app->add_option("--layers", layers, "Candidate layers, e.g. 26-30 or 3,5");
    app->add_option("--vas-sign", vas_sign, "Entropy sign in VAS (+1/-1)");
    app->add_option("--epsilon", epsilon, "SoftIoU epsilon");
    app->add_flag("--chss-pair-mean", chss_pair_mean,
                  "Scale CHSS to the plain pair average");
    app->add_flag("--protect-eos", protect_eos,
                  "Never revise an EOS argmax away");
  }

  saked::SakedConfig resolve() const {
    saked::PartialConfig file;
    std::string path = config_path;
    if (path.empty()) {
      if (const char* env = std::getenv("SAKED_CONFIG")) path = env;
    }
    if (!path.empty()) file = saked::load_config_file(path);

    saked::PartialConfig f;
    f.preset = preset;
    f.lambda1 = lambda1;
    f.lambda2 = lambda2;
    f.lambda3 = lambda3;
    f.alpha = alpha;
    f.beta = beta;
    f.epsilon = epsilon;
    f.q = q;
    f.k_heads = k_heads;
    f.vas_entropy_sign = vas_sign;
    if (layers) f.candidate_layers = saked::parse_layer_list(*layers);
    if (chss_pair_mean) f.chss_pair_mean = true;
    if (protect_eos) f.protect_eos = true;
    return saked::merge_config(file, f);
  }
};

struct ToyFlags {
  saked::toy::ToyModelSpec spec;
  std::optional<std::uint64_t> image_seed;
  std::string prompt = "1,2,3,4";
  std::string weights;
  std::optional<int> eos;

  void attach(CLI::App* app) {
    app->add_option("--seed", spec.seed, "Weight PRNG seed")->capture_default_str();
    app->add_option("--image-seed", image_seed,
                    "Synthetic image seed (default: --seed)");
    app->add_option("--num-layers", spec.num_layers)->capture_default_str();
    app->add_option("--num-heads", spec.num_heads)->capture_default_str();
    app->add_option("--hidden-dim", spec.hidden_dim)->capture_default_str();
    app->add_option("--vocab-size", spec.vocab_size)->capture_default_str();
    app->add_option("--visual-tokens", spec.num_visual_tokens)
        ->capture_default_str();
    app->add_option("--weights", weights, "Load SKWT weights instead of seeding");
    app->add_option("--eos", eos, "EOS token id");
    app->add_option("--prompt", prompt, "Comma-separated prompt token ids")
        ->capture_default_str();
  }

  saked::toy::ToyModel model() const {
    auto s = spec;
    if (!weights.empty()) {
      s.weight_init = saked::toy::WeightInit::kFromFile;
      s.weight_file = weights;
    }
    if (eos) s.eos_token = static_cast<TokenId>(*eos);
    return saked::toy::ToyModel::build(s);
  }

  std::vector<TokenId> prompt_ids(int vocab) const {
    std::vector<TokenId> out;
    std::stringstream ss(prompt);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      long v = 0;
      try {
        v = std::stol(item);
      } catch (const std::exception&) {
        throw saked::InvalidInputError("bad prompt token '" + item + "'");
      }
      if (v < 0 || v >= vocab) {
        throw saked::InvalidInputError("prompt token " + item +
                                       " outside vocabulary");
      }
      out.push_back(static_cast<TokenId>(v));
    }
    if (out.empty()) throw saked::InvalidInputError("prompt is empty");
    return out;
  }

  std::uint64_t visual_seed() const { return image_seed.value_or(spec.seed); }
};

// Writes to `path`, or stdout when empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw saked::IoError("cannot open '" + path + "' for writing");
      path_ = path;
    }
  }
  std::ostream& stream() { return path_.empty() ? std::cout : file_; }
  void finish() {
    stream().flush();
    if (!stream()) throw saked::IoError("failed writing '" + path_ + "'");
  }

 private:
  std::ofstream file_;
  std::string path_;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw saked::IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

void check_format(const std::string& format) {
  if (format != "json" && format != "csv") {
    throw saked::InvalidInputError("--format must be json or csv");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability-aware contrastive decoding toolkit"};
  app.require_subcommand(1);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Record a toy-model trace");
  ToyFlags gen_toy;
  ConfigFlags gen_cfg;
  int gen_steps = 8;
  std::string gen_out, gen_policy = "greedy", gen_save_weights;
  bool gen_json = false;
  gen_toy.attach(gen);
  gen_cfg.attach(gen);
  gen->add_option("--steps", gen_steps, "Tokens to generate")->capture_default_str();
  gen->add_option("-o,--output", gen_out, "Trace path")->required();
  gen->add_option("--policy", gen_policy, "greedy or saked")
      ->check(CLI::IsMember({"greedy", "saked"}))
      ->capture_default_str();
  gen->add_option("--save-weights", gen_save_weights, "Also write SKWT weights");
  gen->add_flag("--json", gen_json, "Write the JSON encoding instead of SKTR");

  // score
  auto* score = app.add_subcommand("score", "Per-layer stability reports");
  ConfigFlags score_cfg;
  std::string score_trace, score_out, score_format = "json";
  std::optional<int> score_step;
  score_cfg.attach(score);
  score->add_option("trace", score_trace, "Trace file")->required();
  score->add_option("--step", score_step, "Only this step");
  score->add_option("-o,--output", score_out, "Output path (default stdout)");
  score->add_option("--format", score_format, "json or csv")->capture_default_str();

  // replay
  auto* replay = app.add_subcommand("replay", "Offline token revision");
  ConfigFlags replay_cfg;
  std::string replay_trace, replay_out, replay_format = "json";
  int replay_threads = 1;
  replay_cfg.attach(replay);
  replay->add_option("trace", replay_trace, "Trace file")->required();
  replay->add_option("-o,--output", replay_out, "Output path (default stdout)");
  replay->add_option("--format", replay_format, "json or csv")
      ->capture_default_str();
  replay->add_option("--threads", replay_threads, "Worker cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // live
  auto* live = app.add_subcommand("live", "Closed-loop decoding on the toy model");
  ToyFlags live_toy;
  ConfigFlags live_cfg;
  int live_max = 16;
  std::string live_policy = "saked", live_out;
  bool tokens_only = false;
  live_toy.attach(live);
  live_cfg.attach(live);
  live->add_option("--max-tokens", live_max)->capture_default_str();
  live->add_option("--policy", live_policy, "greedy or saked")
      ->check(CLI::IsMember({"greedy", "saked"}))
      ->capture_default_str();
  live->add_flag("--tokens-only", tokens_only, "Print only the token ids");
  live->add_option("-o,--output", live_out, "Output path (default stdout)");

  // eval-chair
  auto* chair = app.add_subcommand("eval-chair", "Caption hallucination ratios");
  std::string chair_captions, chair_ann, chair_syn, chair_lex, chair_out;
  bool chair_no_dedup = false;
  chair->add_option("--captions", chair_captions, "JSON-lines captions")
      ->required();
  chair->add_option("--annotations", chair_ann, "Ground-truth objects JSON")
      ->required();
  chair->add_option("--synonyms", chair_syn, "Synonym list");
  chair->add_option("--lexicon", chair_lex,
                    "Object labels, one per line (default: synonym heads)");
  chair->add_flag("--no-dedup", chair_no_dedup,
                  "Count repeated mentions within a caption");
  chair->add_option("-o,--output", chair_out, "Output path (default stdout)");

  // eval-pope
  auto* pope = app.add_subcommand("eval-pope", "Yes/no probing F1");
  std::string pope_records, pope_out;
  std::vector<std::string> pope_splits;
  pope->add_option("records", pope_records, "JSON-lines records")->required();
  pope->add_option("--splits", pope_splits,
                   "Splits to report (default: all three)")
      ->delimiter(',');
  pope->add_option("-o,--output", pope_out, "Output path (default stdout)");

  // validate-trace
  auto* vt = app.add_subcommand("validate-trace", "Check a trace file");
  std::string vt_trace;
  vt->add_option("trace", vt_trace, "Trace file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto model = gen_toy.model();
      const auto prompt = gen_toy.prompt_ids(model.spec().vocab_size);
      const auto visual = saked::toy::make_visual_input(
          model.spec().num_visual_tokens, gen_toy.visual_seed());
      std::optional<saked::SakedConfig> policy;
      if (gen_policy == "saked") policy = gen_cfg.resolve();
      const auto trace =
          saked::toy::generate_trace(model, visual, prompt, gen_steps, policy);
      if (gen_json) {
        Output out(gen_out);
        out.stream() << saked::trace_to_json_text(trace) << '\n';
        out.finish();
      } else {
        saked::write_trace_file(trace, gen_out);
      }
      if (!gen_save_weights.empty()) {
        saked::toy::save_weights(model, gen_save_weights);
      }
    } else if (*score) {
      check_format(score_format);
      const auto config = score_cfg.resolve();
      const auto trace = saked::read_trace_file(score_trace);
      if (score_step &&
          (*score_step < 0 ||
           *score_step >= static_cast<int>(trace.steps.size()))) {
        throw saked::InvalidInputError("--step " + std::to_string(*score_step) +
                                       " outside the trace");
      }
      Output out(score_out);
      bool header = false;
      for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        if (score_step && static_cast<int>(t) != *score_step) continue;
        const auto report =
            saked::build_report(trace, static_cast<int>(t), config);
        if (score_format == "json") {
          out.stream() << saked::report_to_json(report, config) << '\n';
        } else {
          std::string csv = saked::report_to_csv(report);
          if (header) csv.erase(0, csv.find('\n') + 1);
          header = true;
          out.stream() << csv;
        }
      }
      out.finish();
    } else if (*replay) {
      check_format(replay_format);
      const auto config = replay_cfg.resolve();
      const auto trace = saked::read_trace_file(replay_trace);
      const auto result = saked::replay_decode(trace, config, replay_threads);
      Output out(replay_out);
      if (replay_format == "json") {
        for (const auto& s : result.steps) {
          out.stream() << saked::step_to_json_line(s) << '\n';
        }
      } else {
        out.stream() << saked::replay_to_csv(result);
      }
      out.finish();
      std::cerr << "replayed " << result.summary.steps << " steps, "
                << result.summary.changed << " revised\n";
    } else if (*live) {
      const auto model = live_toy.model();
      const auto prompt = live_toy.prompt_ids(model.spec().vocab_size);
      saked::toy::ToySession session(
          model,
          saked::toy::make_visual_input(model.spec().num_visual_tokens,
                                        live_toy.visual_seed()),
          prompt);
      const auto result =
          live_policy == "greedy"
              ? saked::greedy_decode(session, live_max)
              : saked::live_decode(session, live_cfg.resolve(), live_max);
      Output out(live_out);
      if (tokens_only) {
        for (std::size_t i = 0; i < result.tokens.size(); ++i) {
          out.stream() << (i ? " " : "") << result.tokens[i];
        }
        out.stream() << '\n';
      } else {
        for (const auto& s : result.steps) {
          out.stream() << saked::step_to_json_line(s) << '\n';
        }
        std::ostringstream tokens;
        for (std::size_t i = 0; i < result.tokens.size(); ++i) {
          tokens << (i ? "," : "") << result.tokens[i];
        }
        out.stream() << "{\"tokens\":[" << tokens.str()
                     << "],\"stopped_on_eos\":"
                     << (result.stopped_on_eos ? "true" : "false") << "}\n";
      }
      out.finish();
    } else if (*chair) {
      saked::eval::SynonymFile syn;
      if (!chair_syn.empty()) syn = saked::eval::parse_synonyms(read_text(chair_syn));
      std::vector<std::string> lexicon =
          chair_lex.empty() ? syn.canonical_labels : read_lines(chair_lex);
      if (lexicon.empty()) {
        throw saked::InvalidInputError(
            "no lexicon: pass --lexicon or a non-empty --synonyms file");
      }
      const auto annotations = saked::eval::make_annotations(
          saked::eval::parse_annotations_json(read_text(chair_ann)),
          syn.synonyms);
      auto captions = saked::eval::parse_captions_jsonl(read_text(chair_captions));
      for (auto& c : captions) {
        c.extracted_mentions = saked::eval::extract_mentions(
            c.caption, lexicon, annotations.synonyms, !chair_no_dedup);
      }
      const auto result = saked::eval::chair_scores(captions, annotations);
      Output out(chair_out);
      out.stream() << saked::chair_to_json(result) << '\n';
      out.finish();
    } else if (*pope) {
      std::vector<saked::eval::PopeSplit> splits;
      for (const auto& s : pope_splits) splits.push_back(saked::eval::parse_split(s));
      if (splits.empty()) {
        splits.assign(saked::eval::kAllPopeSplits.begin(),
                      saked::eval::kAllPopeSplits.end());
      }
      const auto records = saked::eval::parse_pope_jsonl(read_text(pope_records));
      const auto result = saked::eval::pope_f1(records, splits);
      Output out(pope_out);
      out.stream() << saked::pope_to_json(result) << '\n';
      out.finish();
    } else if (*vt) {
      const auto trace = saked::read_trace_file(vt_trace);
      std::cout << "ok: " << trace.steps.size() << " steps, L="
                << trace.meta.num_layers << " H=" << trace.meta.num_heads
                << " V=" << trace.meta.vocab_size
                << " m=" << trace.meta.num_visual_tokens << '\n';
    }
  } catch (const saked::Error& e) {
    std::cerr << "saked: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "saked: internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
