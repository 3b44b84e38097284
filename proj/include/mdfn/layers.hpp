#pragma once

#include <cmath>
#include <vector>

#include "mdfn/masks.hpp"
#include "mdfn/registry.hpp"
#include "mdfn/tensor.hpp"

namespace mdfn::nn {

// Multi-head self-attention. The channel-decoupling attention is bias-free;
// the encoder's standard blocks pass biases.
template <typename T>
struct MhsaParams {
  int heads = 1;
  Tensor<T> wq, wk, wv, wo;      // each (d, d)
  Tensor<T> bq, bk, bv, bo;      // optional (1, d); leave invalid for none
};

template <typename T>
Tensor<T> mhsa(Tape<T>& tape, Tensor<T> x, const AttnMask& mask,
               const MhsaParams<T>& p) {
  const int d = x.cols();
  const int h = p.heads;
  if (h < 1 || d % h != 0)
    fail(ErrorCode::ConfigError,
         "mhsa: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(h));
  const int dk = d / h;

  Tensor<T> q = matmul(tape, x, p.wq);
  Tensor<T> k = matmul(tape, x, p.wk);
  Tensor<T> v = matmul(tape, x, p.wv);
  if (p.bq.valid()) q = add_rowvec(tape, q, p.bq);
  if (p.bk.valid()) k = add_rowvec(tape, k, p.bk);
  if (p.bv.valid()) v = add_rowvec(tape, v, p.bv);

  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(dk));
  std::vector<Tensor<T>> heads;
  heads.reserve(static_cast<size_t>(h));
  for (int i = 0; i < h; ++i) {
    Tensor<T> qi = slice_cols(tape, q, i * dk, (i + 1) * dk);
    Tensor<T> ki = slice_cols(tape, k, i * dk, (i + 1) * dk);
    Tensor<T> vi = slice_cols(tape, v, i * dk, (i + 1) * dk);
    Tensor<T> scores = scale(tape, matmul_nt(tape, qi, ki), inv_sqrt_dk);
    Tensor<T> attn = masked_softmax(tape, scores, mask);
    heads.push_back(matmul(tape, attn, vi));
  }
  Tensor<T> concat = h == 1 ? heads[0] : concat_cols(tape, heads);
  Tensor<T> out = matmul(tape, concat, p.wo);
  if (p.bo.valid()) out = add_rowvec(tape, out, p.bo);
  return out;
}

// Registers bias-free attention parameters under prefix.{wq,wk,wv,wo}.
template <typename T>
MhsaParams<T> make_mhsa_params(ParamRegistry<T>& reg, const std::string& prefix,
                               int d, int heads) {
  MhsaParams<T> p;
  p.heads = heads;
  p.wq = reg.glorot(prefix + ".wq", {d, d});
  p.wk = reg.glorot(prefix + ".wk", {d, d});
  p.wv = reg.glorot(prefix + ".wv", {d, d});
  p.wo = reg.glorot(prefix + ".wo", {d, d});
  return p;
}

template <typename T>
MhsaParams<T> make_mhsa_params_biased(ParamRegistry<T>& reg,
                                      const std::string& prefix, int d,
                                      int heads) {
  MhsaParams<T> p = make_mhsa_params(reg, prefix, d, heads);
  p.bq = reg.zeros_param(prefix + ".bq", {1, d});
  p.bk = reg.zeros_param(prefix + ".bk", {1, d});
  p.bv = reg.zeros_param(prefix + ".bv", {1, d});
  p.bo = reg.zeros_param(prefix + ".bo", {1, d});
  return p;
}

// Gated recurrent unit, standard formulation:
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   h~ = tanh(x W_h + (r * h) U_h + b_h)
//   h' = (1 - z) * h + z * h~
template <typename T>
struct GruParams {
  Tensor<T> wz, uz, bz, wr, ur, br, wh, uh, bh;
};

template <typename T>
GruParams<T> make_gru_params(ParamRegistry<T>& reg, const std::string& prefix,
                             int in_dim, int d) {
  GruParams<T> p;
  p.wz = reg.glorot(prefix + ".wz", {in_dim, d});
  p.uz = reg.glorot(prefix + ".uz", {d, d});
  p.bz = reg.zeros_param(prefix + ".bz", {1, d});
  p.wr = reg.glorot(prefix + ".wr", {in_dim, d});
  p.ur = reg.glorot(prefix + ".ur", {d, d});
  p.br = reg.zeros_param(prefix + ".br", {1, d});
  p.wh = reg.glorot(prefix + ".wh", {in_dim, d});
  p.uh = reg.glorot(prefix + ".uh", {d, d});
  p.bh = reg.zeros_param(prefix + ".bh", {1, d});
  return p;
}

template <typename T>
Tensor<T> gru_cell(Tape<T>& tape, Tensor<T> h_prev, Tensor<T> x,
                   const GruParams<T>& p) {
  Tensor<T> z = sigmoid(tape, add(tape, linear(tape, x, p.wz, p.bz),
                                  matmul(tape, h_prev, p.uz)));
  Tensor<T> r = sigmoid(tape, add(tape, linear(tape, x, p.wr, p.br),
                                  matmul(tape, h_prev, p.ur)));
  Tensor<T> hc = tanh_op(tape, add(tape, linear(tape, x, p.wh, p.bh),
                                   matmul(tape, mul(tape, r, h_prev), p.uh)));
  Tensor<T> keep = affine(tape, z, T(-1), T(1));  // 1 - z
  return add(tape, mul(tape, keep, h_prev), mul(tape, z, hc));
}

template <typename T>
struct BiGruLayerParams {
  GruParams<T> fwd, bwd;
};

template <typename T>
BiGruLayerParams<T> make_bigru_layer_params(ParamRegistry<T>& reg,
                                            const std::string& prefix,
                                            int in_dim, int d) {
  BiGruLayerParams<T> p;
  p.fwd = make_gru_params(reg, prefix + ".f", in_dim, d);
  p.bwd = make_gru_params(reg, prefix + ".b", in_dim, d);
  return p;
}

template <typename T>
struct BiGruOut {
  Tensor<T> seq;        // (n, 2d): [h_fwd[t]; h_bwd[t]] per position
  Tensor<T> fwd_last;   // (1, d): forward state after the final position
  Tensor<T> bwd_first;  // (1, d): backward state after the first position
};

template <typename T>
BiGruOut<T> bigru_layer(Tape<T>& tape, Tensor<T> x,
                        const BiGruLayerParams<T>& p, int d) {
  const int n = x.rows();
  std::vector<Tensor<T>> fwd(static_cast<size_t>(n)), bwd(static_cast<size_t>(n));
  Tensor<T> h = zeros(tape, {1, d});
  for (int t = 0; t < n; ++t) {
    h = gru_cell(tape, h, rows_slice(tape, x, t, t + 1), p.fwd);
    fwd[static_cast<size_t>(t)] = h;
  }
  Tensor<T> hb = zeros(tape, {1, d});
  for (int t = n - 1; t >= 0; --t) {
    hb = gru_cell(tape, hb, rows_slice(tape, x, t, t + 1), p.bwd);
    bwd[static_cast<size_t>(t)] = hb;
  }
  std::vector<Tensor<T>> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t)
    rows.push_back(concat_cols(tape, {fwd[static_cast<size_t>(t)],
                                      bwd[static_cast<size_t>(t)]}));
  BiGruOut<T> out;
  out.seq = n == 1 ? rows[0] : stack_rows(tape, rows);
  out.fwd_last = fwd[static_cast<size_t>(n - 1)];
  out.bwd_first = bwd[0];
  return out;
}

// Stacked bidirectional GRU; returns the top layer's reading.
template <typename T>
BiGruOut<T> bigru_stack(Tape<T>& tape, Tensor<T> x,
                        const std::vector<BiGruLayerParams<T>>& layers, int d) {
  if (layers.empty()) fail(ErrorCode::ConfigError, "bigru_stack: no layers");
  BiGruOut<T> out = bigru_layer(tape, x, layers[0], d);
  for (size_t i = 1; i < layers.size(); ++i)
    out = bigru_layer(tape, out.seq, layers[i], d);
  return out;
}

// One standard post-norm transformer encoder block.
template <typename T>
struct EncoderBlockParams {
  MhsaParams<T> attn;
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
EncoderBlockParams<T> make_encoder_block_params(ParamRegistry<T>& reg,
                                                const std::string& prefix,
                                                int d, int heads, int ffn) {
  EncoderBlockParams<T> p;
  p.attn = make_mhsa_params_biased(reg, prefix + ".attn", d, heads);
  p.ln1_g = reg.ones_param(prefix + ".ln1.g", {1, d});
  p.ln1_b = reg.zeros_param(prefix + ".ln1.b", {1, d});
  p.ln2_g = reg.ones_param(prefix + ".ln2.g", {1, d});
  p.ln2_b = reg.zeros_param(prefix + ".ln2.b", {1, d});
  p.ffn_w1 = reg.glorot(prefix + ".ffn.w1", {d, ffn});
  p.ffn_b1 = reg.zeros_param(prefix + ".ffn.b1", {1, ffn});
  p.ffn_w2 = reg.glorot(prefix + ".ffn.w2", {ffn, d});
  p.ffn_b2 = reg.zeros_param(prefix + ".ffn.b2", {1, d});
  return p;
}

template <typename T>
Tensor<T> encoder_block(Tape<T>& tape, Tensor<T> x, const AttnMask& pad_mask,
                        const EncoderBlockParams<T>& p) {
  Tensor<T> a = mhsa(tape, x, pad_mask, p.attn);
  Tensor<T> s = layer_norm(tape, add(tape, x, a), p.ln1_g, p.ln1_b);
  Tensor<T> f = linear(tape, relu(tape, linear(tape, s, p.ffn_w1, p.ffn_b1)),
                       p.ffn_w2, p.ffn_b2);
  return layer_norm(tape, add(tape, s, f), p.ln2_g, p.ln2_b);
}

}  // namespace mdfn::nn
