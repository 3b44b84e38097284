#include "mdfn/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "mdfn/error.hpp"

namespace mdfn {

static const char* kSpecialNames[Vocab::kNumSpecials] = {"[PAD]", "[UNK]",
                                                         "[CLS]", "[SEP]"};

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  Vocab v;
  for (const char* s : kSpecialNames) v.tokens.emplace_back(s);
  for (const auto& w : words) v.tokens.push_back(w);
  for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
    if (!v.ids.emplace(v.tokens[i], i).second)
      fail(ErrorCode::ConfigError, "duplicate vocab token '" + v.tokens[i] + "'");
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open vocab file " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.tokens.push_back(line);
  }
  if (v.tokens.size() < kNumSpecials)
    fail(ErrorCode::SchemaError, "vocab file " + path + " has fewer than 4 lines");
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.tokens[i] != kSpecialNames[i])
      fail(ErrorCode::SchemaError, "vocab line " + std::to_string(i) +
                                       " must be " + kSpecialNames[i] +
                                       ", got '" + v.tokens[i] + "'");
  }
  for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
    if (!v.ids.emplace(v.tokens[i], i).second)
      fail(ErrorCode::SchemaError,
           "duplicate vocab token '" + v.tokens[i] + "' at line " + std::to_string(i));
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write vocab file " + path);
  for (const auto& t : tokens) out << t << '\n';
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(vocab.id_of(word));
      word.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

TaggedSequence assemble(const Dialogue& d, int candidate_idx,
                        const AssemblyConfig& cfg) {
  if (d.context.empty()) fail(ErrorCode::EmptyContext, "dialogue has no context");
  if (candidate_idx < 0 || candidate_idx >= static_cast<int>(d.candidates.size()))
    fail(ErrorCode::ConfigError,
         "candidate index " + std::to_string(candidate_idx) + " out of range");
  const Utterance& response = d.candidates[static_cast<size_t>(candidate_idx)];
  if (response.tokens.empty())
    fail(ErrorCode::EmptyCandidate, "candidate " + std::to_string(candidate_idx) +
                                        " has no tokens");
  for (const auto& u : d.context)
    if (u.tokens.empty()) fail(ErrorCode::EmptyContext, "empty context utterance");

  // Keep the most recent max_utterances turns.
  size_t first = 0;
  if (static_cast<int>(d.context.size()) > cfg.max_utterances)
    first = d.context.size() - static_cast<size_t>(cfg.max_utterances);
  const int k = static_cast<int>(d.context.size() - first);

  // Specials: [CLS] plus one [SEP] after each of the k+1 segments.
  const int n_special = 1 + (k + 1);
  int budget = cfg.max_len - n_special;
  const int min_content = k + 1;  // one token per utterance and response
  if (budget < min_content)
    fail(ErrorCode::ConfigError,
         "max_len " + std::to_string(cfg.max_len) + " cannot hold " +
             std::to_string(k) + " context utterances plus a response");

  std::vector<int> keep(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i)
    keep[static_cast<size_t>(i)] =
        static_cast<int>(d.context[first + static_cast<size_t>(i)].tokens.size());
  int resp_keep = static_cast<int>(response.tokens.size());

  // Longest-first trim over context utterances; response only as last resort.
  int total = resp_keep;
  for (int n : keep) total += n;
  while (total > budget) {
    int longest = -1;
    for (int i = 0; i < k; ++i) {
      if (keep[static_cast<size_t>(i)] <= 1) continue;
      if (longest < 0 || keep[static_cast<size_t>(i)] > keep[static_cast<size_t>(longest)])
        longest = i;
    }
    if (longest >= 0) {
      --keep[static_cast<size_t>(longest)];
    } else if (resp_keep > 1) {
      --resp_keep;
    } else {
      fail(ErrorCode::ConfigError, "cannot trim sequence to max_len");
    }
    --total;
  }

  TaggedSequence seq;
  seq.l = cfg.max_len;
  seq.n_utterances = k + 1;
  seq.token_ids.assign(static_cast<size_t>(cfg.max_len), cfg.pad_id);
  seq.utt_index.assign(static_cast<size_t>(cfg.max_len), 0);
  seq.speaker.assign(static_cast<size_t>(cfg.max_len), SpeakerRole::Sender);
  seq.pad_mask.assign(static_cast<size_t>(cfg.max_len), 0);

  int pos = 0;
  auto put = [&](int id, int utt, SpeakerRole role) {
    seq.token_ids[static_cast<size_t>(pos)] = id;
    seq.utt_index[static_cast<size_t>(pos)] = utt;
    seq.speaker[static_cast<size_t>(pos)] = role;
    seq.pad_mask[static_cast<size_t>(pos)] = 1;
    ++pos;
  };

  // [CLS] inherits utterance 1.
  put(cfg.cls_id, 1, d.context[first].speaker);
  for (int i = 0; i < k; ++i) {
    const Utterance& u = d.context[first + static_cast<size_t>(i)];
    for (int t = 0; t < keep[static_cast<size_t>(i)]; ++t)
      put(u.tokens[static_cast<size_t>(t)], i + 1, u.speaker);
    put(cfg.sep_id, i + 1, u.speaker);
  }
  for (int t = 0; t < resp_keep; ++t)
    put(response.tokens[static_cast<size_t>(t)], k + 1, SpeakerRole::Sender);
  put(cfg.sep_id, k + 1, SpeakerRole::Sender);

  seq.real_len = pos;
  return seq;
}

}  // namespace mdfn
