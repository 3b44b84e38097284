#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "mdfn/dialogue.hpp"
#include "mdfn/layers.hpp"
#include "mdfn/masks.hpp"
#include "mdfn/registry.hpp"
#include "mdfn/tensor.hpp"

namespace mdfn {

enum class EncoderMode { Trainable, FileBacked };

struct EncoderConfig {
  int vocab_size = 0;
  int d = 64;
  int layers = 2;
  int heads = 4;
  int max_len = 256;
  int ffn = 0;  // 0 means 2*d
  EncoderMode mode = EncoderMode::Trainable;
  std::string embedding_file;  // FileBacked source

  int ffn_dim() const { return ffn > 0 ? ffn : 2 * d; }
};

// Embedding file: 16-byte header (magic "MDFE", format version, vocab_size,
// d; all little-endian u32) followed by vocab_size*d row-major f32 values.
inline constexpr char kEmbeddingMagic[4] = {'M', 'D', 'F', 'E'};
inline constexpr uint32_t kEmbeddingVersion = 1;

void save_embedding_file(const std::string& path, int vocab_size, int d,
                         const std::vector<float>& table);
std::vector<float> load_embedding_file(const std::string& path,
                                       int expect_vocab, int expect_d);

// Contextual token encoder: embedding + learned positions + standard
// post-norm transformer blocks with full attention (padded positions are
// attendable by nobody). FileBacked mode serves fixed per-token vectors.
template <typename T>
class Encoder {
 public:
  Encoder() = default;

  void build(nn::ParamRegistry<T>& reg, const EncoderConfig& cfg) {
    cfg_ = cfg;
    if (cfg.vocab_size <= 0) fail(ErrorCode::ConfigError, "encoder: vocab_size must be positive");
    if (cfg.mode == EncoderMode::FileBacked) {
      table_ = reg.buffer("enc.table", {cfg.vocab_size, cfg.d});
      if (!cfg.embedding_file.empty()) {
        auto data = load_embedding_file(cfg.embedding_file, cfg.vocab_size, cfg.d);
        for (size_t i = 0; i < data.size(); ++i) table_.val()[i] = static_cast<T>(data[i]);
      }
      return;
    }
    tok_emb_ = reg.glorot("enc.tok_emb", {cfg.vocab_size, cfg.d});
    pos_emb_ = reg.glorot("enc.pos_emb", {cfg.max_len, cfg.d});
    blocks_.clear();
    for (int i = 0; i < cfg.layers; ++i)
      blocks_.push_back(nn::make_encoder_block_params(
          reg, "enc.l" + std::to_string(i), cfg.d, cfg.heads, cfg.ffn_dim()));
  }

  // E: one d-vector per position, pads included.
  nn::Tensor<T> encode(nn::Tape<T>& tape, const TaggedSequence& seq) const {
    if (seq.l > cfg_.max_len)
      fail(ErrorCode::OverlongSequence,
           "sequence length " + std::to_string(seq.l) + " exceeds encoder max_len " +
               std::to_string(cfg_.max_len));
    for (int id : seq.token_ids)
      if (id < 0 || id >= cfg_.vocab_size)
        fail(ErrorCode::OverlongSequence,
             "token id " + std::to_string(id) + " outside vocab of " +
                 std::to_string(cfg_.vocab_size));
    if (cfg_.mode == EncoderMode::FileBacked)
      return nn::embed_rows(tape, table_, seq.token_ids);

    std::vector<int> positions(static_cast<size_t>(seq.l));
    for (int i = 0; i < seq.l; ++i) positions[static_cast<size_t>(i)] = i;
    nn::Tensor<T> x = nn::add(tape, nn::embed_rows(tape, tok_emb_, seq.token_ids),
                              nn::embed_rows(tape, pos_emb_, positions));
    const AttnMask pad_mask = build_padding_mask(seq);
    for (const auto& blk : blocks_) x = nn::encoder_block(tape, x, pad_mask, blk);
    return x;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  nn::Tensor<T> tok_emb_, pos_emb_, table_;
  std::vector<nn::EncoderBlockParams<T>> blocks_;
};

}  // namespace mdfn
