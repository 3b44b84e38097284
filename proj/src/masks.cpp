#include "mdfn/masks.hpp"

namespace mdfn {

static AttnMask empty_mask(int l) {
  AttnMask m;
  m.l = l;
  m.allow.assign(static_cast<size_t>(l) * static_cast<size_t>(l), 0);
  return m;
}

// Fills one row from a pairwise predicate, applying the padding and
// degenerate-row rules.
template <typename Pred>
static void fill_row(AttnMask& m, const TaggedSequence& seq, int i, Pred pred) {
  const int l = m.l;
  uint8_t* row = m.row(i);
  if (!seq.real(i)) {
    row[i] = 1;  // pad row: diagonal only
    return;
  }
  bool any = false;
  for (int j = 0; j < l; ++j) {
    if (!seq.real(j)) continue;
    if (pred(i, j)) {
      row[j] = 1;
      any = true;
    }
  }
  if (!any) {
    row[i] = 1;
    m.fallback_rows.push_back(i);
  }
}

MaskSet build_masks(const TaggedSequence& seq) {
  const int l = seq.l;
  MaskSet ms;
  ms.m1 = empty_mask(l);
  ms.m2 = empty_mask(l);
  ms.m3 = empty_mask(l);
  ms.m4 = empty_mask(l);

  auto same_utt = [&](int i, int j) { return seq.utt_index[i] == seq.utt_index[j]; };
  auto other_utt = [&](int i, int j) { return seq.utt_index[i] != seq.utt_index[j]; };
  auto same_spk = [&](int i, int j) { return seq.speaker[i] == seq.speaker[j]; };
  auto other_spk = [&](int i, int j) { return seq.speaker[i] != seq.speaker[j]; };

  for (int i = 0; i < l; ++i) {
    fill_row(ms.m1, seq, i, same_utt);
    fill_row(ms.m2, seq, i, other_utt);
    fill_row(ms.m3, seq, i, same_spk);
    fill_row(ms.m4, seq, i, other_spk);
  }
  return ms;
}

AttnMask build_padding_mask(const TaggedSequence& seq) {
  AttnMask m = empty_mask(seq.l);
  for (int i = 0; i < seq.l; ++i)
    fill_row(m, seq, i, [](int, int) { return true; });
  return m;
}

}  // namespace mdfn
