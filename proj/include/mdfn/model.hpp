#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mdfn/dialogue.hpp"
#include "mdfn/encoder.hpp"
#include "mdfn/layers.hpp"
#include "mdfn/masks.hpp"
#include "mdfn/registry.hpp"
#include "mdfn/tensor.hpp"

namespace mdfn {

enum class Aggregator { MaxPool, MeanPool, Cnn3, CnnMulti };
enum class Channels { Both, UtteranceOnly, SpeakerOnly, None };
enum class ScoreMode { Binary, MultiChoice };

struct MdfnConfig {
  int d = 64;
  int heads = 4;
  int n_decoupling = 1;
  int n_bigru_layers = 1;
  Aggregator aggregator = Aggregator::MaxPool;
  bool fuse_gate = true;
  bool fuse_original = true;
  Channels channels = Channels::Both;
  ScoreMode mode = ScoreMode::MultiChoice;
};

namespace nn {

// Information-preservation gate: two ReLU feature maps over the original
// representation paired with each channel view, squeezed to a sigmoid ratio.
//   F1 = ReLU(FC1([E, Eb, E-Eb, E*Eb]))     (4d -> d)
//   F2 = ReLU(FC2([E, Eh, E-Eh, E*Eh]))     (4d -> d)
//   P  = Sigmoid(FC3([F1, F2]))             (2d -> d)
// With use_original=false the FC1/FC2 inputs drop the E terms (d -> d).
template <typename T>
struct GateParams {
  Tensor<T> w1, b1, w2, b2, wp, bp;
  bool use_original = true;
};

template <typename T>
GateParams<T> make_gate_params(ParamRegistry<T>& reg, const std::string& prefix,
                               int d, bool use_original) {
  GateParams<T> p;
  p.use_original = use_original;
  const int in = use_original ? 4 * d : d;
  p.w1 = reg.glorot(prefix + ".w1", {in, d});
  p.b1 = reg.zeros_param(prefix + ".b1", {1, d});
  p.w2 = reg.glorot(prefix + ".w2", {in, d});
  p.b2 = reg.zeros_param(prefix + ".b2", {1, d});
  p.wp = reg.glorot(prefix + ".wp", {2 * d, d});
  p.bp = reg.zeros_param(prefix + ".bp", {1, d});
  return p;
}

template <typename T>
Tensor<T> gate_ratio(Tape<T>& tape, Tensor<T> e, Tensor<T> eb, Tensor<T> eh,
                     const GateParams<T>& p) {
  Tensor<T> f1, f2;
  if (p.use_original) {
    f1 = concat_cols(tape, {e, eb, sub(tape, e, eb), mul(tape, e, eb)});
    f2 = concat_cols(tape, {e, eh, sub(tape, e, eh), mul(tape, e, eh)});
  } else {
    f1 = eb;
    f2 = eh;
  }
  Tensor<T> h1 = relu(tape, linear(tape, f1, p.w1, p.b1));
  Tensor<T> h2 = relu(tape, linear(tape, f2, p.w2, p.b2));
  return sigmoid(tape, linear(tape, concat_cols(tape, {h1, h2}), p.wp, p.bp));
}

// Convex combination of the two channel views: P*ca + (1-P)*cb.
template <typename T>
Tensor<T> gated_fusion(Tape<T>& tape, Tensor<T> p, Tensor<T> ca, Tensor<T> cb) {
  Tensor<T> inv_p = affine(tape, p, T(-1), T(1));
  return add(tape, mul(tape, p, ca), mul(tape, inv_p, cb));
}

template <typename T>
struct CnnAggParams {
  Tensor<T> w2, b2, w3, b3, w4, b4;  // width-2/3/4 same-padded kernels
  Tensor<T> mix_w, mix_b;            // 3d -> d squeeze for the multi variant
};

template <typename T>
CnnAggParams<T> make_cnn_agg_params(ParamRegistry<T>& reg,
                                    const std::string& prefix, int d,
                                    bool multi) {
  CnnAggParams<T> p;
  p.w3 = reg.glorot(prefix + ".c3.w", {3 * d, d});
  p.b3 = reg.zeros_param(prefix + ".c3.b", {1, d});
  if (multi) {
    p.w2 = reg.glorot(prefix + ".c2.w", {2 * d, d});
    p.b2 = reg.zeros_param(prefix + ".c2.b", {1, d});
    p.w4 = reg.glorot(prefix + ".c4.w", {4 * d, d});
    p.b4 = reg.zeros_param(prefix + ".c4.b", {1, d});
    p.mix_w = reg.glorot(prefix + ".mix.w", {3 * d, d});
    p.mix_b = reg.zeros_param(prefix + ".mix.b", {1, d});
  }
  return p;
}

}  // namespace nn

// Contiguous [start, end) token span of each utterance 1..n_utterances.
std::vector<std::pair<int, int>> utterance_spans(const TaggedSequence& seq);

namespace nn {

// One row per utterance (response included), pooled over that utterance's
// real token positions.
template <typename T>
Tensor<T> aggregate_utterances(Tape<T>& tape, Tensor<T> c,
                               const TaggedSequence& seq, Aggregator agg,
                               const CnnAggParams<T>* cnn) {
  const auto spans = utterance_spans(seq);
  std::vector<Tensor<T>> rows;
  rows.reserve(spans.size());
  for (const auto& [s, e] : spans) {
    switch (agg) {
      case Aggregator::MaxPool:
        rows.push_back(rows_max(tape, c, s, e));
        break;
      case Aggregator::MeanPool:
        rows.push_back(rows_mean(tape, c, s, e));
        break;
      case Aggregator::Cnn3: {
        Tensor<T> u = rows_slice(tape, c, s, e);
        Tensor<T> y = relu(tape, conv1d_same(tape, u, cnn->w3, cnn->b3, 3));
        rows.push_back(rows_max(tape, y, 0, e - s));
        break;
      }
      case Aggregator::CnnMulti: {
        Tensor<T> u = rows_slice(tape, c, s, e);
        Tensor<T> y2 = rows_max(
            tape, relu(tape, conv1d_same(tape, u, cnn->w2, cnn->b2, 2)), 0, e - s);
        Tensor<T> y3 = rows_max(
            tape, relu(tape, conv1d_same(tape, u, cnn->w3, cnn->b3, 3)), 0, e - s);
        Tensor<T> y4 = rows_max(
            tape, relu(tape, conv1d_same(tape, u, cnn->w4, cnn->b4, 4)), 0, e - s);
        rows.push_back(linear(tape, concat_cols(tape, {y2, y3, y4}), cnn->mix_w,
                              cnn->mix_b));
        break;
      }
    }
  }
  return rows.size() == 1 ? rows[0] : stack_rows(tape, rows);
}

}  // namespace nn

// Per-block trace of the first decoupling block, for inspection and tests.
template <typename T>
struct HeadTrace {
  nn::Tensor<T> c1, c2, c3, c4;  // masked-attention channel outputs
  nn::Tensor<T> p1, p2;          // gate ratios (invalid when fuse_gate=false)
  nn::Tensor<T> cu, cs;          // fused channel representations
};

// The mask-based decoupling-fusing head on top of the token encoder:
// four masked self-attentions split the encoder output into utterance-aware
// and speaker-aware views, sigmoid gates fuse each pair, per-utterance
// pooling plus a bidirectional GRU summarize each channel, and a Tanh
// projection over both channel vectors feeds the classifier.
template <typename T>
class MdfnModel {
 public:
  MdfnModel(const MdfnConfig& mcfg, const EncoderConfig& ecfg,
            const AssemblyConfig& acfg, uint64_t seed)
      : reg_(seed), mcfg_(mcfg), acfg_(acfg) {
    if (mcfg.d != ecfg.d)
      fail(ErrorCode::ConfigError, "model d and encoder d differ");
    if (mcfg.heads < 1 || mcfg.d % mcfg.heads != 0)
      fail(ErrorCode::ConfigError, "model d must be divisible by heads");
    if (mcfg.n_decoupling < 1)
      fail(ErrorCode::ConfigError, "n_decoupling must be >= 1");
    if (mcfg.n_bigru_layers < 1)
      fail(ErrorCode::ConfigError, "n_bigru_layers must be >= 1");
    if (ecfg.max_len < acfg.max_len)
      fail(ErrorCode::ConfigError, "encoder max_len below assembly max_len");
    encoder_.build(reg_, ecfg);
    build_head();
  }

  nn::ParamRegistry<T>& params() { return reg_; }
  const nn::ParamRegistry<T>& params() const { return reg_; }
  const MdfnConfig& config() const { return mcfg_; }
  const EncoderConfig& encoder_config() const { return encoder_.config(); }
  const AssemblyConfig& assembly_config() const { return acfg_; }

  nn::Tensor<T> encode(nn::Tape<T>& tape, const TaggedSequence& seq) const {
    return encoder_.encode(tape, seq);
  }

  // Full head pass producing the fused dialogue vector v in R^d.
  nn::Tensor<T> dialogue_vector(nn::Tape<T>& tape, const TaggedSequence& seq,
                                HeadTrace<T>* trace = nullptr) const {
    nn::Tensor<T> e = encode(tape, seq);
    if (mcfg_.channels == Channels::None)
      return nn::rows_max(tape, e, 0, seq.real_len);

    const MaskSet masks = build_masks(seq);
    nn::Tensor<T> x = e;
    nn::Tensor<T> cu, cs;
    for (int t = 0; t < mcfg_.n_decoupling; ++t) {
      const Block& blk = blocks_[static_cast<size_t>(t)];
      nn::Tensor<T> c1, c2, c3, c4, p1, p2;
      if (use_ua_) {
        c1 = nn::mhsa(tape, x, masks.m1, blk.a1);
        c2 = nn::mhsa(tape, x, masks.m2, blk.a2);
        cu = fuse_pair(tape, x, c1, c2, blk.gu, blk.pu_w, blk.pu_b, &p1);
      }
      if (use_sa_) {
        c3 = nn::mhsa(tape, x, masks.m3, blk.a3);
        c4 = nn::mhsa(tape, x, masks.m4, blk.a4);
        cs = fuse_pair(tape, x, c3, c4, blk.gs, blk.ps_w, blk.ps_b, &p2);
      }
      if (trace && t == 0)
        *trace = HeadTrace<T>{c1, c2, c3, c4, p1, p2, cu, cs};
      if (t + 1 < mcfg_.n_decoupling) {
        nn::Tensor<T> cat = use_ua_ && use_sa_ ? nn::concat_cols(tape, {cu, cs})
                                               : (use_ua_ ? cu : cs);
        x = nn::linear(tape, cat, blk.next_w, blk.next_b);
      }
    }

    nn::Tensor<T> v1 = channel_vector(tape, cu, seq, use_ua_, gru_u_, agg_u_);
    nn::Tensor<T> v2 = channel_vector(tape, cs, seq, use_sa_, gru_s_, agg_s_);
    return nn::tanh_op(
        tape, nn::linear(tape, nn::concat_cols(tape, {v1, v2}), fuse_w_, fuse_b_));
  }

  // Classifier logits for one assembled (context, candidate) sequence:
  // (1,2) in Binary mode, (1,1) in MultiChoice mode.
  nn::Tensor<T> candidate_logits(nn::Tape<T>& tape, const TaggedSequence& seq) const {
    return nn::linear(tape, dialogue_vector(tape, seq), cls_w_, cls_b_);
  }

  // MultiChoice: one logit per candidate, softmaxed across the set.
  nn::Tensor<T> multi_choice_logits(nn::Tape<T>& tape, const Dialogue& dlg) const {
    if (mcfg_.mode != ScoreMode::MultiChoice)
      fail(ErrorCode::ConfigError, "multi_choice_logits on a binary-mode model");
    std::vector<nn::Tensor<T>> logits;
    logits.reserve(dlg.candidates.size());
    for (size_t k = 0; k < dlg.candidates.size(); ++k)
      logits.push_back(candidate_logits(tape, assemble(dlg, static_cast<int>(k), acfg_)));
    return logits.size() == 1 ? logits[0] : nn::concat_cols(tape, logits);
  }

  // Cross-entropy loss of one dialogue in MultiChoice mode.
  nn::Tensor<T> multi_choice_loss(nn::Tape<T>& tape, const Dialogue& dlg) const {
    int positive = -1;
    for (size_t k = 0; k < dlg.labels.size(); ++k)
      if (dlg.labels[k] == 1) positive = static_cast<int>(k);
    if (positive < 0)
      fail(ErrorCode::SchemaError, "multi-choice dialogue without a positive label");
    return nn::softmax_xent(tape, multi_choice_logits(tape, dlg), positive);
  }

  // Binary cross-entropy loss of one (context, candidate) pair.
  nn::Tensor<T> pair_loss(nn::Tape<T>& tape, const Dialogue& dlg, int cand_idx) const {
    if (mcfg_.mode != ScoreMode::Binary)
      fail(ErrorCode::ConfigError, "pair_loss on a multi-choice model");
    const int y = dlg.labels[static_cast<size_t>(cand_idx)];
    return nn::softmax_xent(tape, candidate_logits(tape, assemble(dlg, cand_idx, acfg_)), y);
  }

  // Matching scores g for every candidate; no gradients are recorded.
  std::vector<double> rank_scores(const Dialogue& dlg) const {
    nn::Tape<T> tape(false);
    std::vector<double> out;
    out.reserve(dlg.candidates.size());
    if (mcfg_.mode == ScoreMode::MultiChoice) {
      nn::Tensor<T> row = multi_choice_logits(tape, dlg);
      auto p = nn::softmax_values(row.val());
      for (T v : p) out.push_back(static_cast<double>(v));
    } else {
      for (size_t k = 0; k < dlg.candidates.size(); ++k) {
        nn::Tensor<T> lg =
            candidate_logits(tape, assemble(dlg, static_cast<int>(k), acfg_));
        auto p = nn::softmax_values(lg.val());
        out.push_back(static_cast<double>(p[1]));
      }
    }
    return out;
  }

  // Gate-ratio means of the first block, per channel (inspection aid).
  std::pair<double, double> gate_means(const TaggedSequence& seq) const {
    if (mcfg_.channels == Channels::None || !mcfg_.fuse_gate) return {0.5, 0.5};
    nn::Tape<T> tape(false);
    HeadTrace<T> trace;
    dialogue_vector(tape, seq, &trace);
    auto mean_of = [](const nn::Tensor<T>& t) {
      if (!t.valid()) return 0.5;
      double s = 0;
      for (T v : t.val()) s += static_cast<double>(v);
      return s / static_cast<double>(t.val().size());
    };
    return {mean_of(trace.p1), mean_of(trace.p2)};
  }

  void zero_all_params() {
    for (auto& [name, t] : reg_.trainable())
      std::fill(t.val().begin(), t.val().end(), T(0));
  }

 private:
  struct Block {
    nn::MhsaParams<T> a1, a2, a3, a4;
    nn::GateParams<T> gu, gs;
    nn::Tensor<T> pu_w, pu_b, ps_w, ps_b;  // -Gate direct projections
    nn::Tensor<T> next_w, next_b;          // inter-block squeeze
  };

  void build_head() {
    const int d = mcfg_.d;
    use_ua_ = mcfg_.channels == Channels::Both || mcfg_.channels == Channels::UtteranceOnly;
    use_sa_ = mcfg_.channels == Channels::Both || mcfg_.channels == Channels::SpeakerOnly;
    const int cls_in = mcfg_.channels == Channels::None ? d : d;
    const int cls_out = mcfg_.mode == ScoreMode::Binary ? 2 : 1;
    cls_w_ = reg_.glorot("head.cls.w", {cls_in, cls_out});
    cls_b_ = reg_.zeros_param("head.cls.b", {1, cls_out});
    if (mcfg_.channels == Channels::None) return;

    for (int t = 0; t < mcfg_.n_decoupling; ++t) {
      const std::string bp = "head.b" + std::to_string(t);
      Block blk;
      if (use_ua_) {
        blk.a1 = nn::make_mhsa_params(reg_, bp + ".a1", d, mcfg_.heads);
        blk.a2 = nn::make_mhsa_params(reg_, bp + ".a2", d, mcfg_.heads);
        if (mcfg_.fuse_gate) {
          blk.gu = nn::make_gate_params(reg_, bp + ".gu", d, mcfg_.fuse_original);
        } else {
          blk.pu_w = reg_.glorot(bp + ".pu.w", {2 * d, d});
          blk.pu_b = reg_.zeros_param(bp + ".pu.b", {1, d});
        }
      }
      if (use_sa_) {
        blk.a3 = nn::make_mhsa_params(reg_, bp + ".a3", d, mcfg_.heads);
        blk.a4 = nn::make_mhsa_params(reg_, bp + ".a4", d, mcfg_.heads);
        if (mcfg_.fuse_gate) {
          blk.gs = nn::make_gate_params(reg_, bp + ".gs", d, mcfg_.fuse_original);
        } else {
          blk.ps_w = reg_.glorot(bp + ".ps.w", {2 * d, d});
          blk.ps_b = reg_.zeros_param(bp + ".ps.b", {1, d});
        }
      }
      if (t + 1 < mcfg_.n_decoupling) {
        const int cat = use_ua_ && use_sa_ ? 2 * d : d;
        blk.next_w = reg_.glorot(bp + ".next.w", {cat, d});
        blk.next_b = reg_.zeros_param(bp + ".next.b", {1, d});
      }
      blocks_.push_back(std::move(blk));
    }

    const bool cnn = mcfg_.aggregator == Aggregator::Cnn3 ||
                     mcfg_.aggregator == Aggregator::CnnMulti;
    const bool multi = mcfg_.aggregator == Aggregator::CnnMulti;
    if (use_ua_) {
      if (cnn) agg_u_ = nn::make_cnn_agg_params(reg_, "head.agg_u", d, multi);
      for (int i = 0; i < mcfg_.n_bigru_layers; ++i)
        gru_u_.push_back(nn::make_bigru_layer_params(
            reg_, "head.gru_u.l" + std::to_string(i), i == 0 ? d : 2 * d, d));
    }
    if (use_sa_) {
      if (cnn) agg_s_ = nn::make_cnn_agg_params(reg_, "head.agg_s", d, multi);
      for (int i = 0; i < mcfg_.n_bigru_layers; ++i)
        gru_s_.push_back(nn::make_bigru_layer_params(
            reg_, "head.gru_s.l" + std::to_string(i), i == 0 ? d : 2 * d, d));
    }
    fuse_w_ = reg_.glorot("head.fuse.w", {4 * d, d});
    fuse_b_ = reg_.zeros_param("head.fuse.b", {1, d});
  }

  nn::Tensor<T> fuse_pair(nn::Tape<T>& tape, nn::Tensor<T> e, nn::Tensor<T> ca,
                          nn::Tensor<T> cb, const nn::GateParams<T>& g,
                          nn::Tensor<T> proj_w, nn::Tensor<T> proj_b,
                          nn::Tensor<T>* ratio) const {
    if (!mcfg_.fuse_gate)
      return nn::linear(tape, nn::concat_cols(tape, {ca, cb}), proj_w, proj_b);
    nn::Tensor<T> p = nn::gate_ratio(tape, e, ca, cb, g);
    if (ratio) *ratio = p;
    return nn::gated_fusion(tape, p, ca, cb);
  }

  nn::Tensor<T> channel_vector(nn::Tape<T>& tape, nn::Tensor<T> c,
                               const TaggedSequence& seq, bool enabled,
                               const std::vector<nn::BiGruLayerParams<T>>& gru,
                               const nn::CnnAggParams<T>& agg) const {
    if (!enabled) return nn::zeros(tape, {1, 2 * mcfg_.d});
    nn::Tensor<T> pooled =
        nn::aggregate_utterances(tape, c, seq, mcfg_.aggregator, &agg);
    nn::BiGruOut<T> out = nn::bigru_stack(tape, pooled, gru, mcfg_.d);
    return nn::concat_cols(tape, {out.fwd_last, out.bwd_first});
  }

  nn::ParamRegistry<T> reg_;
  MdfnConfig mcfg_;
  AssemblyConfig acfg_;
  Encoder<T> encoder_;
  bool use_ua_ = true, use_sa_ = true;
  std::vector<Block> blocks_;
  std::vector<nn::BiGruLayerParams<T>> gru_u_, gru_s_;
  nn::CnnAggParams<T> agg_u_, agg_s_;
  nn::Tensor<T> fuse_w_, fuse_b_, cls_w_, cls_b_;
};

}  // namespace mdfn
