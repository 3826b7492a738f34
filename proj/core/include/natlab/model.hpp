#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "natlab/data.hpp"
#include "natlab/rng.hpp"
#include "natlab/tape.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// Encoder-decoder conditional masked language model. The decoder attends
// bidirectionally over the (partially masked) target: there is no causal
// mask anywhere, every non-pad position sees every other. Length
// classification reads the encoder state at the [LEN] position (index 0 of
// every source row).
struct ModelConfig {
  int d_model = 64;
  int d_inner = 256;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  int vocab_size = 0;
  int n_max = 64;  // target length classes 1..n_max; logits slot i scores length i+1
  double dropout_online = 0.3;
  double dropout_average = 0.3;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    check(d_model > 0 && d_inner > 0 && n_heads > 0, "model dims must be positive");
    check(d_model % n_heads == 0, "d_model (", d_model, ") not divisible by n_heads (", n_heads,
          ")");
    check(n_layers_enc >= 1 && n_layers_dec >= 1, "need at least one layer per stack");
    check(vocab_size > NUM_RESERVED, "vocab_size must exceed the reserved block, got ",
          vocab_size);
    check(n_max >= 1, "n_max must be >= 1");
    check(dropout_online >= 0 && dropout_online < 1 && dropout_average >= 0 &&
              dropout_average < 1,
          "dropout probabilities must lie in [0, 1)");
  }
};

// Named weight collection; the same layout backs both the gradient-trained
// online store and the EMA average store.
template <class T>
using ParamStore = TensorMap<T>;

template <class T>
struct ForwardOutput {
  NodePtr<T> token_logits;   // [B, Lt, vocab_size]
  NodePtr<T> length_logits;  // [B, n_max]
};

namespace model_detail {

inline std::string enc_prefix(int layer) { return concat("enc", layer, "."); }
inline std::string dec_prefix(int layer) { return concat("dec", layer, "."); }

template <class T>
void add_linear(ParamStore<T>& store, Rng& master, const std::string& name, int in, int out) {
  Rng rng = master.fork(fnv1a(name));
  TensorData<T> w({in, out});
  const double limit = std::sqrt(6.0 / (in + out));
  for (auto& v : w.v) v = static_cast<T>(rng.uniform(-limit, limit));
  store.emplace(name + ".w", std::move(w));
  store.emplace(name + ".b", TensorData<T>({out}, T(0)));
}

template <class T>
void add_layer_norm(ParamStore<T>& store, const std::string& name, int d) {
  store.emplace(name + ".g", TensorData<T>({d}, T(1)));
  store.emplace(name + ".b", TensorData<T>({d}, T(0)));
}

template <class T>
void add_embedding(ParamStore<T>& store, Rng& master, const std::string& name, int vocab, int d) {
  Rng rng = master.fork(fnv1a(name));
  TensorData<T> e({vocab, d});
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& v : e.v) v = static_cast<T>(rng.normal() * std_dev);
  store.emplace(name, std::move(e));
}

template <class T>
void add_attention_block(ParamStore<T>& store, Rng& master, const std::string& prefix, int d) {
  add_linear(store, master, prefix + "q", d, d);
  add_linear(store, master, prefix + "k", d, d);
  add_linear(store, master, prefix + "v", d, d);
  add_linear(store, master, prefix + "o", d, d);
}

template <class T>
void add_ffn_block(ParamStore<T>& store, Rng& master, const std::string& prefix, int d,
                   int inner) {
  add_linear(store, master, prefix + "1", d, inner);
  add_linear(store, master, prefix + "2", inner, d);
}

// Sinusoidal position table [L, d], tiled over the batch by the caller.
template <class T>
TensorData<T> positional_encoding(int length, int d) {
  TensorData<T> pe({length, d});
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe.at(static_cast<int64_t>(pos) * d + i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe.at(static_cast<int64_t>(pos) * d + i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// Additive attention mask [B*H, Lq, Lk]: 0 over valid keys, -1e9 over pads.
template <class T>
TensorData<T> key_pad_mask(int n_heads, int lq, int lk, const std::vector<int>& key_len) {
  const int B = static_cast<int>(key_len.size());
  TensorData<T> m({B * n_heads, lq, lk}, T(0));
  for (int b = 0; b < B; ++b) {
    const int valid = key_len[static_cast<size_t>(b)];
    if (valid >= lk) continue;
    for (int h = 0; h < n_heads; ++h)
      for (int q = 0; q < lq; ++q) {
        T* row = m.data() + ((static_cast<int64_t>(b) * n_heads + h) * lq + q) * lk;
        for (int k = valid; k < lk; ++k) row[k] = T(-1e9);
      }
  }
  return m;
}

}  // namespace model_detail

template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, const Rng& seed_rng) {
  cfg.validate();
  using namespace model_detail;
  Rng master = seed_rng;
  ParamStore<T> store;
  add_embedding(store, master, "enc_embed", cfg.vocab_size, cfg.d_model);
  add_embedding(store, master, "dec_embed", cfg.vocab_size, cfg.d_model);
  for (int l = 0; l < cfg.n_layers_enc; ++l) {
    const std::string p = enc_prefix(l);
    add_attention_block(store, master, p + "self.", cfg.d_model);
    add_layer_norm(store, p + "ln_att", cfg.d_model);
    add_ffn_block(store, master, p + "ffn.", cfg.d_model, cfg.d_inner);
    add_layer_norm(store, p + "ln_ffn", cfg.d_model);
  }
  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string p = dec_prefix(l);
    add_attention_block(store, master, p + "self.", cfg.d_model);
    add_layer_norm(store, p + "ln_self", cfg.d_model);
    add_attention_block(store, master, p + "cross.", cfg.d_model);
    add_layer_norm(store, p + "ln_cross", cfg.d_model);
    add_ffn_block(store, master, p + "ffn.", cfg.d_model, cfg.d_inner);
    add_layer_norm(store, p + "ln_ffn", cfg.d_model);
  }
  add_linear(store, master, "out", cfg.d_model, cfg.vocab_size);
  add_linear(store, master, "len", cfg.d_model, cfg.n_max);
  return store;
}

namespace model_detail {

template <class T>
NodePtr<T> dropout(Tape<T>& tape, const NodePtr<T>& x, T p, Rng& rng) {
  if (p <= T(0)) return x;
  TensorData<T> mask(x->shape);
  const T keep = T(1) / (T(1) - p);
  for (auto& v : mask.v) v = rng.uniform() < static_cast<double>(p) ? T(0) : keep;
  return mul(tape, x, tape.constant(std::move(mask)));
}

template <class T>
NodePtr<T> linear(Tape<T>& tape, const BoundParams<T>& P, const std::string& name,
                  const NodePtr<T>& x2d) {
  return add_bias(tape, matmul(tape, x2d, P.at(name + ".w")), P.at(name + ".b"));
}

// Multi-head attention over padded batches; q_in/kv_in are [B*L, d] with the
// per-sentence valid key counts masking pad keys additively.
template <class T>
NodePtr<T> attention(Tape<T>& tape, const BoundParams<T>& P, const ModelConfig& cfg,
                     const std::string& prefix, const NodePtr<T>& q_in, const NodePtr<T>& kv_in,
                     int batch, int lq, int lk, const std::vector<int>& key_len) {
  const int d = cfg.d_model, H = cfg.n_heads, dk = cfg.head_dim();
  auto q = split_heads(tape, reshape(tape, linear(tape, P, prefix + "q", q_in), {batch, lq, d}), H);
  auto k = split_heads(tape, reshape(tape, linear(tape, P, prefix + "k", kv_in), {batch, lk, d}), H);
  auto v = split_heads(tape, reshape(tape, linear(tape, P, prefix + "v", kv_in), {batch, lk, d}), H);

  auto scores = scale(tape, bmm(tape, q, k, false, true), static_cast<T>(1.0 / std::sqrt(dk)));
  scores = add(tape, scores, tape.constant(key_pad_mask<T>(H, lq, lk, key_len)));
  auto ctx = bmm(tape, softmax(tape, scores, 2), v);
  auto merged = reshape(tape, merge_heads(tape, ctx, H), {batch * lq, d});
  return linear(tape, P, prefix + "o", merged);
}

// Post-norm residual sublayer: LN(x + Dropout(sub)).
template <class T>
NodePtr<T> residual(Tape<T>& tape, const BoundParams<T>& P, const std::string& ln_name,
                    const NodePtr<T>& x, const NodePtr<T>& sub, T drop, Rng& rng) {
  auto y = add(tape, x, dropout(tape, sub, drop, rng));
  return layer_norm(tape, y, P.at(ln_name + ".g"), P.at(ln_name + ".b"));
}

template <class T>
NodePtr<T> ffn(Tape<T>& tape, const BoundParams<T>& P, const std::string& prefix,
               const NodePtr<T>& x2d) {
  return linear(tape, P, prefix + "2", gelu(tape, linear(tape, P, prefix + "1", x2d)));
}

template <class T>
NodePtr<T> embed_sequence(Tape<T>& tape, const BoundParams<T>& P, const ModelConfig& cfg,
                          const std::string& table, const Padded2D& ids, T drop, Rng& rng) {
  const int B = ids.rows, L = ids.width, d = cfg.d_model;
  auto emb = embed_lookup(tape, P.at(table), ids.ids);
  emb = scale(tape, emb, static_cast<T>(std::sqrt(static_cast<double>(d))));
  TensorData<T> pe_row = positional_encoding<T>(L, d);
  TensorData<T> pe({B * L, d});
  for (int b = 0; b < B; ++b)
    std::copy(pe_row.v.begin(), pe_row.v.end(), pe.v.begin() + static_cast<int64_t>(b) * L * d);
  emb = add(tape, emb, tape.constant(std::move(pe)));
  return dropout(tape, emb, drop, rng);
}

}  // namespace model_detail

template <class T>
struct EncoderState {
  NodePtr<T> output;         // [B*Ls, d]
  NodePtr<T> length_logits;  // [B, n_max]
  int batch = 0;
  int src_width = 0;
  std::vector<int> src_len;
};

template <class T>
EncoderState<T> encode(Tape<T>& tape, const BoundParams<T>& P, const ModelConfig& cfg,
                       const Padded2D& src, T dropout_prob, Rng& rng) {
  using namespace model_detail;
  const int B = src.rows, Ls = src.width;
  auto x = embed_sequence(tape, P, cfg, "enc_embed", src, dropout_prob, rng);
  for (int l = 0; l < cfg.n_layers_enc; ++l) {
    const std::string p = enc_prefix(l);
    auto att = attention(tape, P, cfg, p + "self.", x, x, B, Ls, Ls, src.lengths);
    x = residual(tape, P, p + "ln_att", x, att, dropout_prob, rng);
    x = residual(tape, P, p + "ln_ffn", x, ffn(tape, P, p + "ffn.", x), dropout_prob, rng);
  }

  // Length head reads the encoder top at the [LEN] position (index 0).
  std::vector<int64_t> len_rows(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) len_rows[static_cast<size_t>(b)] = static_cast<int64_t>(b) * Ls;
  auto len_state = gather_rows(tape, x, std::move(len_rows));
  auto length_logits = linear(tape, P, "len", len_state);

  EncoderState<T> state;
  state.output = x;
  state.length_logits = length_logits;
  state.batch = B;
  state.src_width = Ls;
  state.src_len = src.lengths;
  return state;
}

template <class T>
NodePtr<T> decode_tokens(Tape<T>& tape, const BoundParams<T>& P, const ModelConfig& cfg,
                         const EncoderState<T>& enc, const Padded2D& tgt, T dropout_prob,
                         Rng& rng) {
  using namespace model_detail;
  const int B = tgt.rows, Lt = tgt.width, Ls = enc.src_width;
  check(B == enc.batch, "decode_tokens: target batch ", B, " does not match encoder batch ",
        enc.batch);
  auto x = embed_sequence(tape, P, cfg, "dec_embed", tgt, dropout_prob, rng);
  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string p = dec_prefix(l);
    // Bidirectional self-attention: every non-pad target position attends to
    // all non-pad target positions, left and right alike.
    auto self_att = attention(tape, P, cfg, p + "self.", x, x, B, Lt, Lt, tgt.lengths);
    x = residual(tape, P, p + "ln_self", x, self_att, dropout_prob, rng);
    auto cross = attention(tape, P, cfg, p + "cross.", x, enc.output, B, Lt, Ls, enc.src_len);
    x = residual(tape, P, p + "ln_cross", x, cross, dropout_prob, rng);
    x = residual(tape, P, p + "ln_ffn", x, ffn(tape, P, p + "ffn.", x), dropout_prob, rng);
  }
  auto logits = model_detail::linear(tape, P, "out", x);
  return reshape(tape, logits, {B, Lt, cfg.vocab_size});
}

// Full pass: encoder over the source (with [LEN] prepended by the data
// layer), decoder over the masked target input, token and length heads.
template <class T>
ForwardOutput<T> forward(Tape<T>& tape, const BoundParams<T>& P, const ModelConfig& cfg,
                         const Padded2D& src, const Padded2D& tgt, T dropout_prob, Rng& rng) {
  for (int len : tgt.lengths)
    check(len <= cfg.n_max, "target length ", len, " exceeds n_max ", cfg.n_max);
  auto enc = encode(tape, P, cfg, src, dropout_prob, rng);
  ForwardOutput<T> out;
  out.token_logits = decode_tokens(tape, P, cfg, enc, tgt, dropout_prob, rng);
  out.length_logits = enc.length_logits;
  return out;
}

struct LengthCandidate {
  int length = 0;
  double log_prob = 0.0;
};

// Top-k length classes per sentence, best first; ties prefer the smaller
// length. Logits slot i scores length i+1.
template <class T>
std::vector<std::vector<LengthCandidate>> predict_length(const NodePtr<T>& length_logits, int k) {
  check(k >= 1, "predict_length: k must be >= 1, got ", k);
  check(length_logits->shape.size() == 2, "predict_length: expected [batch, n_max] logits, got ",
        shape_str(length_logits->shape));
  const int B = length_logits->shape[0], n_max = length_logits->shape[1];
  const int kk = std::min(k, n_max);
  std::vector<std::vector<LengthCandidate>> out;
  out.reserve(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const T* row = length_logits->value.data() + static_cast<int64_t>(b) * n_max;
    double mx = row[0];
    for (int i = 1; i < n_max; ++i) mx = std::max(mx, static_cast<double>(row[i]));
    double z = 0.0;
    for (int i = 0; i < n_max; ++i) z += std::exp(static_cast<double>(row[i]) - mx);
    const double logz = mx + std::log(z);

    std::vector<LengthCandidate> cands(static_cast<size_t>(n_max));
    for (int i = 0; i < n_max; ++i)
      cands[static_cast<size_t>(i)] = {i + 1, static_cast<double>(row[i]) - logz};
    std::partial_sort(cands.begin(), cands.begin() + kk, cands.end(),
                      [](const LengthCandidate& a, const LengthCandidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return a.length < b.length;
                      });
    cands.resize(static_cast<size_t>(kk));
    out.push_back(std::move(cands));
  }
  return out;
}

}  // namespace natlab
