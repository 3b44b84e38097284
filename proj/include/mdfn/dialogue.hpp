#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdfn {

// Exactly two roles. The candidate response is always spoken by Sender.
enum class SpeakerRole : uint8_t { Sender, Receiver };

inline SpeakerRole other_role(SpeakerRole r) {
  return r == SpeakerRole::Sender ? SpeakerRole::Receiver : SpeakerRole::Sender;
}

// Vocabulary file: one token per line, line number = id.
// Lines 0..3 are fixed: [PAD], [UNK], [CLS], [SEP]; asserted at load.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kNumSpecials = 4;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;

  static Vocab from_words(const std::vector<std::string>& words);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(std::string_view tok) const {
    auto it = ids.find(std::string(tok));
    return it == ids.end() ? kUnk : it->second;
  }
};

// Whitespace-split, lowercased; unseen words map to [UNK]. Never fails.
std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

struct Utterance {
  std::vector<int> tokens;
  SpeakerRole speaker = SpeakerRole::Sender;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> context;
  std::vector<Utterance> candidates;  // each spoken by Sender
  std::vector<int> labels;            // 0/1, one per candidate
};

// Flat token sequence with per-position utterance index T_i, speaker S_i and
// padding flags. Length l always equals the configured maximum after padding.
struct TaggedSequence {
  std::vector<int> token_ids;
  std::vector<int> utt_index;           // 1-based over real tokens; 0 at padding
  std::vector<SpeakerRole> speaker;
  std::vector<uint8_t> pad_mask;        // 1 = real token
  int l = 0;
  int n_utterances = 0;                 // k+1, response included
  int real_len = 0;

  bool real(int i) const { return pad_mask[static_cast<size_t>(i)] != 0; }
};

struct AssemblyConfig {
  int max_len = 256;
  int max_utterances = 20;
  int cls_id = Vocab::kCls;
  int sep_id = Vocab::kSep;
  int pad_id = Vocab::kPad;
};

// Layout: [CLS] u_1 [SEP] u_2 [SEP] ... u_k [SEP] r [SEP] [PAD]...
// The context keeps its most recent max_utterances turns. The response is
// utterance k+1 with role Sender. Each [SEP] inherits the index and speaker
// of the utterance it terminates; [CLS] inherits utterance 1.
// Over-budget content is trimmed one tail token at a time from the currently
// longest context utterance (ties: lowest index); the response is trimmed
// only once every context utterance is down to a single token.
TaggedSequence assemble(const Dialogue& d, int candidate_idx,
                        const AssemblyConfig& cfg);

}  // namespace mdfn
