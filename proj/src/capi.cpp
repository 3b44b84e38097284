#include "mdfn/mdfn.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "json.hpp"
#include "mdfn/checkpoint.hpp"
#include "mdfn/config.hpp"
#include "mdfn/data.hpp"
#include "mdfn/error.hpp"
#include "mdfn/masks.hpp"
#include "mdfn/metrics.hpp"
#include "mdfn/train.hpp"

using nlohmann::json;

struct mdfn_model {
  mdfn::LoadedModel loaded;
};

namespace {

thread_local std::string g_last_error;

constexpr int kUnknownError = 1000;

int code_of(const mdfn::MdfnError& e) { return static_cast<int>(e.code()) + 1; }

template <typename F>
int guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MDFN_OK;
  } catch (const mdfn::MdfnError& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return kUnknownError;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mdfn::RawDialogue line_at(const std::string& path, int index, mdfn::ScoreMode mode) {
  auto report = mdfn::read_jsonl(path, mode);
  if (!report.line_errors.empty() && report.dialogues.empty())
    mdfn::fail(mdfn::ErrorCode::SchemaError, report.line_errors[0]);
  if (index < 0 || index >= static_cast<int>(report.dialogues.size()))
    mdfn::fail(mdfn::ErrorCode::ConfigError,
               "index " + std::to_string(index) + " out of range; file has " +
                   std::to_string(report.dialogues.size()) + " records");
  return report.dialogues[static_cast<size_t>(index)];
}

json mask_grid(const mdfn::AttnMask& m) {
  json rows = json::array();
  for (int i = 0; i < m.l; ++i) {
    json row = json::array();
    for (int j = 0; j < m.l; ++j)
      row.push_back(m.at(i, j) ? json(0) : json("-inf"));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

extern "C" {

const char* mdfn_last_error(void) { return g_last_error.c_str(); }

const char* mdfn_error_code_name(int code) {
  if (code == MDFN_OK) return "Ok";
  if (code == kUnknownError) return "InternalError";
  return mdfn::error_code_name(static_cast<mdfn::ErrorCode>(code - 1));
}

void mdfn_string_free(char* s) { std::free(s); }

int mdfn_gen_data(const char* synth_config_json, const char* out_dir) {
  return guarded([&] {
    if (!synth_config_json || !out_dir)
      mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");
    const mdfn::SynthConfig cfg = mdfn::synth_from_json(synth_config_json);
    mdfn::write_synthetic(mdfn::generate_synthetic(cfg), out_dir);
  });
}

int mdfn_train(const char* data_dir, const char* model_spec_json,
               const char* optim_json, const char* ablations_csv,
               int has_seed_override, unsigned long long seed_override,
               const char* out_dir, mdfn_log_fn log, void* log_user,
               char** summary_json_out) {
  return guarded([&] {
    if (!data_dir || !out_dir) mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");
    mdfn::ModelSpecConfig spec;
    if (model_spec_json) spec = mdfn::model_spec_from_json(model_spec_json);
    if (ablations_csv) {
      std::string csv(ablations_csv);
      size_t pos = 0;
      while (pos <= csv.size() && !csv.empty()) {
        const size_t comma = csv.find(',', pos);
        const std::string name =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!name.empty()) mdfn::apply_ablation_preset(spec, name);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    mdfn::OptimConfig ocfg;
    if (optim_json) ocfg = mdfn::optim_from_json(optim_json);
    if (has_seed_override) ocfg.seed = static_cast<uint64_t>(seed_override);

    mdfn::LogFn logger;
    if (log) logger = [log, log_user](const std::string& line) { log(line.c_str(), log_user); };
    const mdfn::TrainResult r = mdfn::train_model(data_dir, spec, ocfg, out_dir, logger);

    if (summary_json_out) {
      json j{{"best_checkpoint", r.best_checkpoint},
             {"best_epoch", r.best_epoch},
             {"best_val_r_at_1", r.best_r1},
             {"best_val_mrr", r.best_mrr},
             {"steps", r.steps},
             {"epochs_run", r.epochs_run},
             {"final_loss", r.final_loss}};
      *summary_json_out = dup_string(j.dump());
    }
  });
}

int mdfn_model_open(const char* checkpoint_path, mdfn_model** out) {
  return guarded([&] {
    if (!checkpoint_path || !out) mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");
    auto handle = std::make_unique<mdfn_model>();
    handle->loaded = mdfn::load_checkpoint(checkpoint_path);
    *out = handle.release();
  });
}

void mdfn_model_close(mdfn_model* m) { delete m; }

int mdfn_eval(mdfn_model* m, const char* jsonl_path, int threads,
              char** metrics_json_out) {
  return guarded([&] {
    if (!m || !jsonl_path || !metrics_json_out)
      mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");
    auto report = mdfn::read_jsonl(jsonl_path, m->loaded.spec.model.mode);
    if (report.dialogues.empty())
      mdfn::fail(mdfn::ErrorCode::SchemaError,
                 report.line_errors.empty() ? "no records in " + std::string(jsonl_path)
                                            : report.line_errors[0]);
    const mdfn::EvalSummary s = mdfn::evaluate_dataset(
        *m->loaded.model, m->loaded.vocab, report.dialogues, threads < 1 ? 1 : threads);
    json j{{"instances", s.instances},
           {"n_candidates", s.n_candidates},
           {"r_at_1", s.r_at_1},
           {"r_at_2", s.r_at_2},
           {"mrr", s.mrr},
           {"map", s.map},
           {"p_at_1", s.p_at_1},
           {"skipped_no_positive", s.skipped},
           {"line_errors", report.line_errors}};
    *metrics_json_out = dup_string(j.dump());
  });
}

int mdfn_rank(mdfn_model* m, const char* jsonl_path, char** result_json_out) {
  return guarded([&] {
    if (!m || !jsonl_path || !result_json_out)
      mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");
    auto report = mdfn::read_jsonl(jsonl_path, m->loaded.spec.model.mode);
    json items = json::array();
    for (const auto& raw : report.dialogues) {
      const mdfn::Dialogue d = mdfn::to_dialogue(raw, m->loaded.vocab);
      const std::vector<double> scores = m->loaded.model->rank_scores(d);
      items.push_back(json{{"id", raw.id},
                           {"candidates", raw.candidates},
                           {"labels", raw.labels},
                           {"scores", scores},
                           {"order", mdfn::ranked_order(scores)}});
    }
    json j{{"instances", items}, {"line_errors", report.line_errors}};
    *result_json_out = dup_string(j.dump());
  });
}

int mdfn_inspect_masks(const char* jsonl_path, int index,
                       const char* checkpoint_path, unsigned long long seed,
                       char** json_out) {
  return guarded([&] {
    if (!jsonl_path || !json_out) mdfn::fail(mdfn::ErrorCode::ConfigError, "null argument");

    std::unique_ptr<mdfn::MdfnModel<float>> fresh_model;
    mdfn::LoadedModel loaded;
    const mdfn::MdfnModel<float>* model = nullptr;
    mdfn::Vocab vocab;
    mdfn::ModelSpecConfig spec;

    const mdfn::RawDialogue raw =
        line_at(jsonl_path, index, mdfn::ScoreMode::MultiChoice);
    int cand = 0;  // prefer the positive candidate when labels mark one
    for (size_t k = 0; k < raw.labels.size(); ++k)
      if (raw.labels[k] == 1) cand = static_cast<int>(k);

    auto word_count = [](const std::string& text) {
      int n = 0;
      bool in_word = false;
      for (char c : text) {
        const bool ws = c == ' ' || c == '\t';
        if (!ws && !in_word) ++n;
        in_word = !ws;
      }
      return n;
    };

    if (checkpoint_path) {
      loaded = mdfn::load_checkpoint(checkpoint_path);
      model = loaded.model.get();
      vocab = loaded.vocab;
      spec = loaded.spec;
    } else {
      // No checkpoint: vocabulary comes from the record itself, the grid is
      // sized to the record (no padding rows), and the gate statistics
      // reflect a seed-initialized default model.
      std::vector<std::string> words;
      auto add_words = [&words](const std::string& text) {
        std::string w;
        for (char c : text + " ") {
          if (c == ' ' || c == '\t') {
            if (!w.empty()) words.push_back(w);
            w.clear();
          } else {
            w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
          }
        }
      };
      for (const auto& u : raw.context) add_words(u.text);
      for (const auto& c : raw.candidates) add_words(c);
      std::sort(words.begin(), words.end());
      words.erase(std::unique(words.begin(), words.end()), words.end());
      vocab = mdfn::Vocab::from_words(words);
      spec.encoder.vocab_size = vocab.size();

      int need = 1;  // [CLS]
      const size_t keep = std::min(raw.context.size(),
                                   static_cast<size_t>(spec.assembly.max_utterances));
      for (size_t i = raw.context.size() - keep; i < raw.context.size(); ++i)
        need += word_count(raw.context[i].text) + 1;
      need += word_count(raw.candidates[static_cast<size_t>(cand)]) + 1;
      spec.assembly.max_len = need;
      spec.encoder.max_len = std::max(spec.encoder.max_len, need);
      fresh_model = std::make_unique<mdfn::MdfnModel<float>>(
          spec.model, spec.encoder, spec.assembly, static_cast<uint64_t>(seed));
      model = fresh_model.get();
    }

    const mdfn::Dialogue d = mdfn::to_dialogue(raw, vocab);
    const mdfn::TaggedSequence seq = mdfn::assemble(d, cand, spec.assembly);
    const mdfn::MaskSet masks = mdfn::build_masks(seq);
    const auto [p1, p2] = model->gate_means(seq);

    json tokens = json::array(), speakers = json::array();
    for (int i = 0; i < seq.l; ++i) {
      tokens.push_back(vocab.tokens[static_cast<size_t>(seq.token_ids[static_cast<size_t>(i)])]);
      speakers.push_back(!seq.real(i) ? "-"
                         : seq.speaker[static_cast<size_t>(i)] == mdfn::SpeakerRole::Sender
                             ? "M"
                             : "F");
    }
    json j{{"id", raw.id},
           {"candidate", cand},
           {"l", seq.l},
           {"real_len", seq.real_len},
           {"n_utterances", seq.n_utterances},
           {"tokens", tokens},
           {"utt_index", seq.utt_index},
           {"speakers", speakers},
           {"masks",
            json{{"m1", mask_grid(masks.m1)},
                 {"m2", mask_grid(masks.m2)},
                 {"m3", mask_grid(masks.m3)},
                 {"m4", mask_grid(masks.m4)}}},
           {"fallback_rows",
            json{{"m1", masks.m1.fallback_rows},
                 {"m2", masks.m2.fallback_rows},
                 {"m3", masks.m3.fallback_rows},
                 {"m4", masks.m4.fallback_rows}}},
           {"gate_mean_p", json{{"utterance", p1}, {"speaker", p2}}}};
    *json_out = dup_string(j.dump());
  });
}

}  // extern "C"
