#pragma once

#include <string>
#include <vector>

#include "mdfn/config.hpp"
#include "mdfn/dialogue.hpp"

namespace mdfn {

// Raw (untokenized) dialogue as stored on disk: one JSON object per line,
// {"context":[{"speaker":"F|M","text":"..."}],"candidates":[...],"labels":[...]}
// plus an optional "id". Speaker "M" is the responding side (Sender);
// candidates are always the sender's turn.
struct RawUtterance {
  std::string speaker;  // "F" or "M"
  std::string text;
};

struct RawDialogue {
  std::string id;
  std::vector<RawUtterance> context;
  std::vector<std::string> candidates;
  std::vector<int> labels;
};

struct ReadReport {
  std::vector<RawDialogue> dialogues;
  std::vector<std::string> line_errors;  // "line N: why", skipped lines
};

// Validates per line and keeps going; MultiChoice mode additionally requires
// exactly one positive label per record.
ReadReport read_jsonl(const std::string& path, ScoreMode mode);

void write_jsonl(const std::string& path, const std::vector<RawDialogue>& dialogues);

SpeakerRole role_from_wire(const std::string& speaker);

// Tokenized view against a vocabulary (unknown words map to [UNK]).
Dialogue to_dialogue(const RawDialogue& raw, const Vocab& vocab);

struct SynthOutput {
  std::vector<RawDialogue> train, valid, test;
  std::vector<std::string> words;  // vocabulary body (specials excluded)
};

// Deterministic synthetic corpora. Both tasks build alternating two-speaker
// contexts whose correct candidate echoes a key token:
//   speaker_echo        — the key of the responder's own most recent turn;
//                         one distractor echoes the other speaker's most
//                         recent turn, the rest carry unused keys. Which of
//                         the last two turns belongs to the responder varies
//                         per dialogue, so utterance recency alone cannot
//                         separate the top two candidates.
//   last_utterance_echo — the key of the final turn; distractors echo the
//                         three turns before it.
// Filler and key words come from disjoint pools, so membership of a key in a
// candidate is decisive, and each dialogue's keys are distinct.
SynthOutput generate_synthetic(const SynthConfig& cfg);

// Writes train/valid/test JSONL plus vocab.txt into out_dir.
void write_synthetic(const SynthOutput& out, const std::string& out_dir);

}  // namespace mdfn
