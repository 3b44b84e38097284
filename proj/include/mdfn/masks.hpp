#pragma once

#include <cstdint>
#include <vector>

#include "mdfn/dialogue.hpp"

namespace mdfn {

// Additive value a blocked attention cell stands for. Kept finite so a
// softmax over a fully populated row stays differentiable; a blocked cell
// carries exactly zero probability mass after masked_softmax.
constexpr float kNegInf = -1e9f;

// One l x l additive attention mask stored as an allow grid:
// allow = 1 means additive 0, allow = 0 means additive kNegInf.
struct AttnMask {
  int l = 0;
  std::vector<uint8_t> allow;
  std::vector<int> fallback_rows;  // real rows degraded to diagonal-only

  bool at(int i, int j) const {
    return allow[static_cast<size_t>(i) * static_cast<size_t>(l) +
                 static_cast<size_t>(j)] != 0;
  }
  uint8_t* row(int i) { return allow.data() + static_cast<size_t>(i) * l; }
  const uint8_t* row(int i) const {
    return allow.data() + static_cast<size_t>(i) * l;
  }
};

// The four channel masks:
//   m1: same utterance     m2: other utterances
//   m3: same speaker       m4: other speaker
// Padded columns are blocked everywhere; padded rows attend to themselves
// only. A real row whose scope would be empty (e.g. m2 on a single-utterance
// sequence) falls back to its diagonal and is recorded in fallback_rows.
struct MaskSet {
  AttnMask m1, m2, m3, m4;
};

MaskSet build_masks(const TaggedSequence& seq);

// Full attention over real tokens, pads blocked (diagonal-only pad rows).
// Used by the encoder.
AttnMask build_padding_mask(const TaggedSequence& seq);

}  // namespace mdfn
