// Tokenizer, vocabulary and sequence-assembly tests. The trim oracle values
// were produced by simulating the longest-first loop by hand before the
// implementation existed; they are frozen here.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdfn/dialogue.hpp"
#include "mdfn/error.hpp"
#include "mdfn/rng.hpp"

using namespace mdfn;

namespace {

Utterance utt(std::vector<int> toks, SpeakerRole r) {
  Utterance u;
  u.tokens = std::move(toks);
  u.speaker = r;
  return u;
}

// Dialogue whose context utterances have the given token counts, speakers
// alternating starting with Receiver, plus one Sender response.
Dialogue make_dialogue(const std::vector<int>& ctx_lens, int resp_len) {
  Dialogue d;
  d.id = "t";
  int next = 10;
  for (size_t i = 0; i < ctx_lens.size(); ++i) {
    std::vector<int> toks;
    for (int t = 0; t < ctx_lens[i]; ++t) toks.push_back(next++);
    d.context.push_back(
        utt(std::move(toks),
            i % 2 == 0 ? SpeakerRole::Receiver : SpeakerRole::Sender));
  }
  std::vector<int> resp;
  for (int t = 0; t < resp_len; ++t) resp.push_back(next++);
  d.candidates.push_back(utt(std::move(resp), SpeakerRole::Sender));
  d.labels.push_back(1);
  return d;
}

// Kept token count of utterance `u` (1-based; n_utterances = response).
int kept_len(const TaggedSequence& s, int u) {
  int n = 0;
  for (int i = 0; i < s.real_len; ++i)
    if (s.utt_index[static_cast<size_t>(i)] == u &&
        s.token_ids[static_cast<size_t>(i)] != Vocab::kSep &&
        s.token_ids[static_cast<size_t>(i)] != Vocab::kCls)
      ++n;
  return n;
}

}  // namespace

TEST_CASE("tokenize: lowercased whitespace split with [UNK] fallback") {
  Vocab v = Vocab::from_words({"hello", "world"});
  int hello = v.id_of("hello");
  int world = v.id_of("world");
  CHECK(hello >= Vocab::kNumSpecials);

  CHECK(tokenize("Hello World", v) == std::vector<int>{hello, world});
  CHECK(tokenize("", v).empty());
  CHECK(tokenize("   \t\n ", v).empty());
  CHECK(tokenize("hello zzz", v) == std::vector<int>{hello, Vocab::kUnk});
  CHECK(tokenize("HELLO\thello\nHeLLo", v) ==
        std::vector<int>{hello, hello, hello});
}

TEST_CASE("vocab: specials pinned to lines 0..3, round-trips through a file") {
  Vocab v = Vocab::from_words({"alpha", "beta"});
  CHECK(v.tokens[0] == "[PAD]");
  CHECK(v.tokens[1] == "[UNK]");
  CHECK(v.tokens[2] == "[CLS]");
  CHECK(v.tokens[3] == "[SEP]");
  CHECK(v.size() == 6);
  CHECK(v.id_of("alpha") == 4);
  CHECK(v.id_of("missing") == Vocab::kUnk);

  auto path = std::filesystem::temp_directory_path() / "mdfn_vocab_test.txt";
  v.save(path.string());
  Vocab w = Vocab::load(path.string());
  CHECK(w.tokens == v.tokens);
  std::filesystem::remove(path);
}

TEST_CASE("vocab: malformed files are rejected") {
  auto dir = std::filesystem::temp_directory_path();
  auto bad = dir / "mdfn_vocab_bad.txt";
  {
    std::ofstream out(bad);
    out << "[PAD]\n[UNK]\n[SEP]\n[CLS]\n";  // swapped specials
  }
  CHECK_THROWS_AS(Vocab::load(bad.string()), MdfnError);
  {
    std::ofstream out(bad);
    out << "[PAD]\n[UNK]\n[CLS]\n[SEP]\ndup\ndup\n";
  }
  CHECK_THROWS_AS(Vocab::load(bad.string()), MdfnError);
  std::filesystem::remove(bad);
  CHECK_THROWS_AS(Vocab::load((dir / "mdfn_no_such_vocab.txt").string()),
                  MdfnError);
  CHECK_THROWS_AS(Vocab::from_words({"x", "x"}), MdfnError);
  CHECK_THROWS_AS(Vocab::from_words({"[PAD]"}), MdfnError);
}

TEST_CASE("assemble: layout of one utterance plus response at max_len 10") {
  // [CLS] t t t [SEP] r r [SEP] [PAD] [PAD]
  Dialogue d = make_dialogue({3}, 2);
  AssemblyConfig cfg;
  cfg.max_len = 10;
  TaggedSequence s = assemble(d, 0, cfg);

  CHECK(s.l == 10);
  CHECK(s.real_len == 8);
  CHECK(s.n_utterances == 2);
  CHECK(s.token_ids == std::vector<int>{Vocab::kCls, 10, 11, 12, Vocab::kSep,
                                        13, 14, Vocab::kSep, Vocab::kPad,
                                        Vocab::kPad});
  CHECK(s.utt_index == std::vector<int>{1, 1, 1, 1, 1, 2, 2, 2, 0, 0});
  for (int i = 0; i < 8; ++i) CHECK(s.real(i));
  CHECK_FALSE(s.real(8));
  CHECK_FALSE(s.real(9));
  // Response and its [SEP] are spoken by Sender; u1 and its specials by the
  // first context speaker.
  for (int i = 0; i < 5; ++i)
    CHECK(s.speaker[static_cast<size_t>(i)] == SpeakerRole::Receiver);
  for (int i = 5; i < 8; ++i)
    CHECK(s.speaker[static_cast<size_t>(i)] == SpeakerRole::Sender);
}

TEST_CASE("assemble: longest-first trim [5,3,9]+2 at content budget 14") {
  // Hand-simulated: repeatedly drop a tail token from the longest context
  // utterance (ties to the lowest index) until the budget holds. The loop
  // visits 9->8->7->6->5, then the 5/5 tie trims utterance 1: [4,3,5]+2.
  Dialogue d = make_dialogue({5, 3, 9}, 2);
  AssemblyConfig cfg;
  cfg.max_len = 14 + 5;  // 14 content + [CLS] + 4 [SEP]
  TaggedSequence s = assemble(d, 0, cfg);

  CHECK(kept_len(s, 1) == 4);
  CHECK(kept_len(s, 2) == 3);
  CHECK(kept_len(s, 3) == 5);
  CHECK(kept_len(s, 4) == 2);
  CHECK(s.real_len == cfg.max_len);
  // Trimming removes tail tokens: the survivors are each utterance's prefix.
  CHECK(s.token_ids[1] == 10);  // u1 starts after [CLS]
  CHECK(s.token_ids[4] == 13);  // u1 keeps tokens 10..13
  CHECK(s.token_ids[5] == Vocab::kSep);
}

TEST_CASE("assemble: response is trimmed only as a last resort") {
  Dialogue d = make_dialogue({1, 1}, 6);
  AssemblyConfig cfg;
  cfg.max_len = 9;  // specials 4 -> content budget 5 -> response must give 3
  TaggedSequence s = assemble(d, 0, cfg);
  CHECK(kept_len(s, 1) == 1);
  CHECK(kept_len(s, 2) == 1);
  CHECK(kept_len(s, 3) == 3);
}

TEST_CASE("assemble: round-trip preserves order when nothing is trimmed") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    int k = rng.range(1, 6);
    std::vector<int> lens;
    for (int i = 0; i < k; ++i) lens.push_back(rng.range(1, 5));
    int resp_len = rng.range(1, 5);
    Dialogue d = make_dialogue(lens, resp_len);

    AssemblyConfig cfg;
    cfg.max_len = 64;
    TaggedSequence s = assemble(d, 0, cfg);

    // Gather real tokens back per utterance and compare.
    std::vector<int> flat;
    for (const auto& u : d.context)
      flat.insert(flat.end(), u.tokens.begin(), u.tokens.end());
    flat.insert(flat.end(), d.candidates[0].tokens.begin(),
                d.candidates[0].tokens.end());
    std::vector<int> got;
    for (int i = 0; i < s.real_len; ++i) {
      int id = s.token_ids[static_cast<size_t>(i)];
      if (id != Vocab::kCls && id != Vocab::kSep) got.push_back(id);
    }
    CHECK(got == flat);

    // T_i is non-decreasing over real tokens and contiguous per utterance.
    for (int i = 1; i < s.real_len; ++i) {
      CHECK(s.utt_index[static_cast<size_t>(i)] >=
            s.utt_index[static_cast<size_t>(i - 1)]);
      CHECK(s.utt_index[static_cast<size_t>(i)] -
                s.utt_index[static_cast<size_t>(i - 1)] <=
            1);
    }
    // Exactly one [SEP] per utterance, as its final position.
    for (int u = 1; u <= s.n_utterances; ++u) {
      int last = -1;
      int seps = 0;
      for (int i = 0; i < s.real_len; ++i) {
        if (s.utt_index[static_cast<size_t>(i)] == u) last = i;
        if (s.utt_index[static_cast<size_t>(i)] == u &&
            s.token_ids[static_cast<size_t>(i)] == Vocab::kSep)
          ++seps;
      }
      CHECK(seps == 1);
      CHECK(s.token_ids[static_cast<size_t>(last)] == Vocab::kSep);
    }
  }
}

TEST_CASE("assemble: context speakers alternate in the assembled tags") {
  Dialogue d = make_dialogue({2, 2, 2}, 2);
  AssemblyConfig cfg;
  cfg.max_len = 32;
  TaggedSequence s = assemble(d, 0, cfg);
  // Utterances 1..3 alternate Receiver/Sender/Receiver; response is Sender.
  std::vector<SpeakerRole> want = {SpeakerRole::Receiver, SpeakerRole::Sender,
                                   SpeakerRole::Receiver, SpeakerRole::Sender};
  for (int i = 0; i < s.real_len; ++i) {
    int u = s.utt_index[static_cast<size_t>(i)];
    CHECK(s.speaker[static_cast<size_t>(i)] == want[static_cast<size_t>(u - 1)]);
  }
}

TEST_CASE("assemble: context capped to the most recent 20 utterances") {
  std::vector<int> lens(25, 1);
  Dialogue d = make_dialogue(lens, 1);
  AssemblyConfig cfg;
  cfg.max_len = 64;
  TaggedSequence s = assemble(d, 0, cfg);
  CHECK(s.n_utterances == 21);  // 20 kept turns + response
  // The first kept utterance is original context turn 6 (0-based 5): its
  // first token id is 10 + 5.
  CHECK(s.token_ids[1] == 15);
}

TEST_CASE("assemble: error cases") {
  Dialogue empty_ctx;
  empty_ctx.candidates.push_back(utt({4}, SpeakerRole::Sender));
  AssemblyConfig cfg;
  CHECK_THROWS_WITH_AS(assemble(empty_ctx, 0, cfg),
                       doctest::Contains("no context"), MdfnError);

  Dialogue d = make_dialogue({2}, 1);
  d.candidates[0].tokens.clear();
  try {
    assemble(d, 0, cfg);
    FAIL("expected EmptyCandidate");
  } catch (const MdfnError& e) {
    CHECK(e.code() == ErrorCode::EmptyCandidate);
  }

  Dialogue e = make_dialogue({2}, 1);
  CHECK_THROWS_AS(assemble(e, 3, cfg), MdfnError);   // bad candidate index
  CHECK_THROWS_AS(assemble(e, -1, cfg), MdfnError);

  // max_len too small for one token per segment plus specials.
  Dialogue f = make_dialogue({2, 2}, 2);
  AssemblyConfig tiny;
  tiny.max_len = 6;  // needs 4 specials + 3 content
  CHECK_THROWS_AS(assemble(f, 0, tiny), MdfnError);
}
