#include "mdfn/model.hpp"

namespace mdfn {

std::vector<std::pair<int, int>> utterance_spans(const TaggedSequence& seq) {
  std::vector<std::pair<int, int>> spans(static_cast<size_t>(seq.n_utterances),
                                         {-1, -1});
  int prev = 0;
  for (int i = 0; i < seq.real_len; ++i) {
    const int u = seq.utt_index[static_cast<size_t>(i)];
    if (u < 1 || u > seq.n_utterances)
      fail(ErrorCode::ShapeError, "utterance tag out of range at position " + std::to_string(i));
    if (u < prev)
      fail(ErrorCode::ShapeError, "utterance tags not contiguous at position " + std::to_string(i));
    auto& [s, e] = spans[static_cast<size_t>(u - 1)];
    if (s < 0) s = i;
    e = i + 1;
    prev = u;
  }
  for (int u = 0; u < seq.n_utterances; ++u)
    if (spans[static_cast<size_t>(u)].first < 0)
      fail(ErrorCode::ShapeError, "utterance " + std::to_string(u + 1) + " has no tokens");
  return spans;
}

}  // namespace mdfn
