#include "mdfn/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mdfn/error.hpp"
#include "mdfn/rng.hpp"

namespace mdfn {

using nlohmann::json;

SpeakerRole role_from_wire(const std::string& speaker) {
  if (speaker == "M") return SpeakerRole::Sender;
  if (speaker == "F") return SpeakerRole::Receiver;
  fail(ErrorCode::SchemaError, "speaker must be 'F' or 'M', got '" + speaker + "'");
}

namespace {

// Returns an error description, or empty if the record is valid.
std::string validate_record(const json& j, ScoreMode mode, RawDialogue& out) {
  if (!j.is_object()) return "record is not an object";
  if (!j.contains("context") || !j.at("context").is_array() || j.at("context").empty())
    return "missing or empty 'context' array";
  if (!j.contains("candidates") || !j.at("candidates").is_array() ||
      j.at("candidates").empty())
    return "missing or empty 'candidates' array";
  if (!j.contains("labels") || !j.at("labels").is_array())
    return "missing 'labels' array";
  if (j.at("labels").size() != j.at("candidates").size())
    return "labels length " + std::to_string(j.at("labels").size()) +
           " != candidates length " + std::to_string(j.at("candidates").size());

  RawDialogue d;
  if (j.contains("id")) {
    if (!j.at("id").is_string()) return "'id' is not a string";
    d.id = j.at("id").get<std::string>();
  }
  for (const auto& u : j.at("context")) {
    if (!u.is_object() || !u.contains("speaker") || !u.contains("text") ||
        !u.at("speaker").is_string() || !u.at("text").is_string())
      return "context entries need string 'speaker' and 'text'";
    RawUtterance ru{u.at("speaker").get<std::string>(), u.at("text").get<std::string>()};
    if (ru.speaker != "F" && ru.speaker != "M")
      return "speaker must be 'F' or 'M', got '" + ru.speaker + "'";
    if (ru.text.find_first_not_of(" \t") == std::string::npos)
      return "empty context utterance text";
    d.context.push_back(std::move(ru));
  }
  for (const auto& c : j.at("candidates")) {
    if (!c.is_string()) return "candidates must be strings";
    const std::string text = c.get<std::string>();
    if (text.find_first_not_of(" \t") == std::string::npos)
      return "empty candidate text";
    d.candidates.push_back(text);
  }
  int positives = 0;
  for (const auto& y : j.at("labels")) {
    if (!y.is_number_integer()) return "labels must be integers";
    const int v = y.get<int>();
    if (v != 0 && v != 1) return "labels must be 0 or 1";
    positives += v;
    d.labels.push_back(v);
  }
  if (mode == ScoreMode::MultiChoice && positives != 1)
    return "multi-choice record needs exactly one positive label, got " +
           std::to_string(positives);
  out = std::move(d);
  return "";
}

}  // namespace

ReadReport read_jsonl(const std::string& path, ScoreMode mode) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  ReadReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      report.line_errors.push_back("line " + std::to_string(line_no) + ": invalid JSON");
      continue;
    }
    RawDialogue d;
    const std::string err = validate_record(j, mode, d);
    if (!err.empty()) {
      report.line_errors.push_back("line " + std::to_string(line_no) + ": " + err);
      continue;
    }
    if (d.id.empty()) d.id = "line-" + std::to_string(line_no);
    report.dialogues.push_back(std::move(d));
  }
  return report;
}

void write_jsonl(const std::string& path, const std::vector<RawDialogue>& dialogues) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-stable newlines
  if (!os) fail(ErrorCode::IoError, "cannot write " + path);
  for (const auto& d : dialogues) {
    json ctx = json::array();
    for (const auto& u : d.context)
      ctx.push_back(json{{"speaker", u.speaker}, {"text", u.text}});
    json j{{"id", d.id}, {"context", ctx}, {"candidates", d.candidates},
           {"labels", d.labels}};
    os << j.dump() << "\n";
  }
  if (!os) fail(ErrorCode::IoError, "short write to " + path);
}

Dialogue to_dialogue(const RawDialogue& raw, const Vocab& vocab) {
  Dialogue d;
  d.id = raw.id;
  for (const auto& u : raw.context)
    d.context.push_back(Utterance{tokenize(u.text, vocab), role_from_wire(u.speaker)});
  for (const auto& c : raw.candidates)
    d.candidates.push_back(Utterance{tokenize(c, vocab), SpeakerRole::Sender});
  d.labels = raw.labels;
  return d;
}

namespace {

std::string word_name(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return std::string(buf);
}

// Filler words plus one key word at a random position.
std::string compose_text(SplitMix64& rng, const std::vector<std::string>& fillers,
                         const std::string& key, int len) {
  std::vector<std::string> words;
  words.reserve(static_cast<size_t>(len));
  for (int i = 0; i + 1 < len; ++i)
    words.push_back(fillers[rng.below(fillers.size())]);
  const size_t pos = rng.below(words.size() + 1);
  words.insert(words.begin() + static_cast<long>(pos), key);
  std::string text;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  return text;
}

}  // namespace

SynthOutput generate_synthetic(const SynthConfig& cfg) {
  const bool speaker_task = cfg.task == "speaker_echo";
  if (!speaker_task && cfg.task != "last_utterance_echo")
    fail(ErrorCode::ConfigError, "unknown synthetic task: " + cfg.task);
  if (cfg.n_dialogues < 10)
    fail(ErrorCode::ConfigError, "n_dialogues must be at least 10");
  if (cfg.turns_lo < 2 || cfg.turns_lo > cfg.turns_hi)
    fail(ErrorCode::ConfigError, "turns range needs 2 <= lo <= hi");
  if (cfg.utt_len_lo < 1 || cfg.utt_len_lo > cfg.utt_len_hi)
    fail(ErrorCode::ConfigError, "utterance_len range needs 1 <= lo <= hi");
  if (cfg.n_candidates < 2)
    fail(ErrorCode::ConfigError, "n_candidates must be at least 2");
  if (!speaker_task && cfg.turns_lo < 4)
    fail(ErrorCode::ConfigError, "last_utterance_echo needs turns >= 4");

  const int n_words = cfg.vocab_size - Vocab::kNumSpecials;
  const int n_fillers = std::max(8, n_words * 2 / 5);
  const int n_keys = n_words - n_fillers;
  const int keys_needed = cfg.turns_hi + std::max(0, cfg.n_candidates - 2);
  if (n_keys < keys_needed + 4)
    fail(ErrorCode::ConfigError,
         "vocab_size " + std::to_string(cfg.vocab_size) + " leaves only " +
             std::to_string(n_keys) + " key words; need > " +
             std::to_string(keys_needed + 4));

  SynthOutput out;
  std::vector<std::string> fillers, keys;
  for (int i = 0; i < n_fillers; ++i) {
    fillers.push_back(word_name("f", i));
    out.words.push_back(fillers.back());
  }
  for (int i = 0; i < n_keys; ++i) {
    keys.push_back(word_name("k", i));
    out.words.push_back(keys.back());
  }

  SplitMix64 rng(cfg.seed);
  const char* id_prefix = speaker_task ? "spkecho" : "uttecho";
  for (int n = 0; n < cfg.n_dialogues; ++n) {
    RawDialogue d;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s-%06d", id_prefix, n);
      d.id = buf;
    }
    const int k = rng.range(cfg.turns_lo, cfg.turns_hi);
    const bool start_m = rng.below(2) == 1;

    // One distinct key per turn plus spares for unused-key distractors.
    const auto key_ids = rng.sample_distinct(
        static_cast<int>(keys.size()), k + std::max(0, cfg.n_candidates - 2));
    for (int i = 0; i < k; ++i) {
      RawUtterance u;
      u.speaker = (i % 2 == 0) == start_m ? "M" : "F";
      u.text = compose_text(rng, fillers, keys[key_ids[static_cast<size_t>(i)]],
                            rng.range(cfg.utt_len_lo, cfg.utt_len_hi));
      d.context.push_back(std::move(u));
    }

    // Key each candidate must echo, correct first.
    std::vector<std::string> cand_keys;
    int spare = k;
    if (speaker_task) {
      int m_last = -1, f_last = -1;
      for (int i = 0; i < k; ++i)
        (d.context[static_cast<size_t>(i)].speaker == "M" ? m_last : f_last) = i;
      cand_keys.push_back(keys[key_ids[static_cast<size_t>(m_last)]]);
      cand_keys.push_back(keys[key_ids[static_cast<size_t>(f_last)]]);
      while (static_cast<int>(cand_keys.size()) < cfg.n_candidates)
        cand_keys.push_back(keys[key_ids[static_cast<size_t>(spare++)]]);
    } else {
      cand_keys.push_back(keys[key_ids[static_cast<size_t>(k - 1)]]);
      for (int j = 1; static_cast<int>(cand_keys.size()) < cfg.n_candidates; ++j) {
        if (k - 1 - j >= 0)
          cand_keys.push_back(keys[key_ids[static_cast<size_t>(k - 1 - j)]]);
        else
          cand_keys.push_back(keys[key_ids[static_cast<size_t>(spare++)]]);
      }
    }

    std::vector<int> order(static_cast<size_t>(cfg.n_candidates));
    for (int i = 0; i < cfg.n_candidates; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    d.candidates.resize(static_cast<size_t>(cfg.n_candidates));
    d.labels.assign(static_cast<size_t>(cfg.n_candidates), 0);
    for (int slot = 0; slot < cfg.n_candidates; ++slot) {
      const int which = order[static_cast<size_t>(slot)];
      d.candidates[static_cast<size_t>(slot)] =
          compose_text(rng, fillers, cand_keys[static_cast<size_t>(which)],
                       rng.range(cfg.utt_len_lo, cfg.utt_len_hi));
      if (which == 0) d.labels[static_cast<size_t>(slot)] = 1;
    }

    // Generation-time oracle: membership of the correct key must single out
    // exactly the positive candidate (key pools are disjoint from fillers).
    const std::string& correct_key = cand_keys[0];
    for (int slot = 0; slot < cfg.n_candidates; ++slot) {
      const bool echoes =
          (" " + d.candidates[static_cast<size_t>(slot)] + " ").find(" " + correct_key + " ") !=
          std::string::npos;
      if (echoes != (d.labels[static_cast<size_t>(slot)] == 1))
        fail(ErrorCode::ConfigError, "synthetic oracle violation in " + d.id);
    }

    // 80/10/10 split, disjoint by construction.
    const int cut_train = cfg.n_dialogues * 8 / 10;
    const int cut_valid = cfg.n_dialogues * 9 / 10;
    if (n < cut_train)
      out.train.push_back(std::move(d));
    else if (n < cut_valid)
      out.valid.push_back(std::move(d));
    else
      out.test.push_back(std::move(d));
  }
  return out;
}

void write_synthetic(const SynthOutput& out, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_jsonl((dir / "train.jsonl").string(), out.train);
  write_jsonl((dir / "valid.jsonl").string(), out.valid);
  write_jsonl((dir / "test.jsonl").string(), out.test);
  Vocab::from_words(out.words).save((dir / "vocab.txt").string());
}

}  // namespace mdfn
