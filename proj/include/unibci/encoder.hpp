#pragma once

#include <memory>
#include <string>
#include <vector>

#include "unibci/init.hpp"
#include "unibci/params.hpp"
#include "unibci/tape.hpp"

namespace unibci {

struct EncoderConfig {
  Index d = 64;
  Index n_layers = 4;
  Index n_heads = 8;
  Index window = 10;
  Index d_ff = 256;
  double dropout = 0.1;
  bool aswa_scale = true;  // 1/sqrt(d_h) on windowed attention scores

  Index head_dim() const {
    if (n_heads < 1 || d % n_heads != 0)
      fail(ErrorKind::dimension, "encoder: n_heads must divide d");
    return d / n_heads;
  }
};

// Deterministic per-site dropout seeding: sites are numbered in tape
// construction order, so a fixed base seed reproduces every mask.
struct DropoutStream {
  double p = 0.0;
  std::uint64_t base = 0;
  bool training = false;
  std::uint64_t counter = 0;

  template <typename S>
  Var apply(Tape<S>& tape, Var x) {
    return tape.dropout(x, p, mix64(base, counter++), training);
  }
};

inline std::string layer_name(Index layer, const std::string& part) {
  return "enc.l" + std::to_string(layer) + "." + part;
}

// Attention projections carry no bias; LayerNorm starts at identity.
template <typename S>
void init_encoder_params(ParamStore<S>& store, const EncoderConfig& cfg, std::uint64_t seed) {
  const Index dh = cfg.head_dim();
  std::uint64_t stream = 0;
  auto add_normal = [&](const std::string& name, Shape shape, double stddev) {
    Tensor<S> t(shape);
    Rng rng(mix64(seed, 1000 + stream++));
    fill_normal(t, rng, stddev);
    store.add(name, std::move(t));
  };
  for (Index l = 0; l < cfg.n_layers; ++l) {
    for (Index h = 0; h < cfg.n_heads; ++h) {
      add_normal(layer_name(l, "ila.q" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
      add_normal(layer_name(l, "ila.k" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
      add_normal(layer_name(l, "ila.v" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
    }
    add_normal(layer_name(l, "ila.out"), Shape{cfg.d, cfg.d}, 0.02);
    store.add(layer_name(l, "pool_ln.gamma"), Tensor<S>::full(Shape{cfg.d}, S(1)));
    store.add(layer_name(l, "pool_ln.beta"), Tensor<S>::zeros(Shape{cfg.d}));
    for (Index h = 0; h < cfg.n_heads; ++h) {
      add_normal(layer_name(l, "aswa.q" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
      add_normal(layer_name(l, "aswa.k" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
      add_normal(layer_name(l, "aswa.v" + std::to_string(h)), Shape{cfg.d, dh}, 0.02);
    }
    add_normal(layer_name(l, "aswa.out"), Shape{cfg.d, cfg.d}, 0.02);
    store.add(layer_name(l, "ffn_ln.gamma"), Tensor<S>::full(Shape{cfg.d}, S(1)));
    store.add(layer_name(l, "ffn_ln.beta"), Tensor<S>::zeros(Shape{cfg.d}));
    add_normal(layer_name(l, "ffn.w1"), Shape{cfg.d, cfg.d_ff}, 0.02);
    store.add(layer_name(l, "ffn.b1"), Tensor<S>::zeros(Shape{cfg.d_ff}));
    add_normal(layer_name(l, "ffn.w2"), Shape{cfg.d_ff, cfg.d}, 0.02);
    store.add(layer_name(l, "ffn.b2"), Tensor<S>::zeros(Shape{cfg.d}));
  }
}

// All parameters of one store inserted as tape leaves, addressable by name.
template <typename S>
struct BoundParams {
  Tape<S>* tape = nullptr;
  const ParamStore<S>* store = nullptr;
  std::vector<Var> vars;

  static BoundParams bind(Tape<S>& tape, const ParamStore<S>& store) {
    BoundParams bp;
    bp.tape = &tape;
    bp.store = &store;
    bp.vars.reserve(static_cast<std::size_t>(store.size()));
    for (Index i = 0; i < store.size(); ++i) bp.vars.push_back(tape.leaf(store.value(i)));
    return bp;
  }
  Var operator[](const std::string& name) const {
    return vars[static_cast<std::size_t>(store->index_of(name))];
  }
  bool has(const std::string& name) const { return store->contains(name); }
};

template <typename S>
struct LayerVars {
  std::vector<Var> ila_q, ila_k, ila_v;
  Var ila_out;
  Var pool_gamma, pool_beta;
  std::vector<Var> aswa_q, aswa_k, aswa_v;
  Var aswa_out;
  Var ffn_gamma, ffn_beta, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename S>
LayerVars<S> bind_layer(const BoundParams<S>& bp, Index layer, Index n_heads) {
  LayerVars<S> lv;
  for (Index h = 0; h < n_heads; ++h) {
    lv.ila_q.push_back(bp[layer_name(layer, "ila.q" + std::to_string(h))]);
    lv.ila_k.push_back(bp[layer_name(layer, "ila.k" + std::to_string(h))]);
    lv.ila_v.push_back(bp[layer_name(layer, "ila.v" + std::to_string(h))]);
  }
  lv.ila_out = bp[layer_name(layer, "ila.out")];
  lv.pool_gamma = bp[layer_name(layer, "pool_ln.gamma")];
  lv.pool_beta = bp[layer_name(layer, "pool_ln.beta")];
  for (Index h = 0; h < n_heads; ++h) {
    lv.aswa_q.push_back(bp[layer_name(layer, "aswa.q" + std::to_string(h))]);
    lv.aswa_k.push_back(bp[layer_name(layer, "aswa.k" + std::to_string(h))]);
    lv.aswa_v.push_back(bp[layer_name(layer, "aswa.v" + std::to_string(h))]);
  }
  lv.aswa_out = bp[layer_name(layer, "aswa.out")];
  lv.ffn_gamma = bp[layer_name(layer, "ffn_ln.gamma")];
  lv.ffn_beta = bp[layer_name(layer, "ffn_ln.beta")];
  lv.ffn_w1 = bp[layer_name(layer, "ffn.w1")];
  lv.ffn_b1 = bp[layer_name(layer, "ffn.b1")];
  lv.ffn_w2 = bp[layer_name(layer, "ffn.w2")];
  lv.ffn_b2 = bp[layer_name(layer, "ffn.b2")];
  return lv;
}

// Single-slice single-head linear attention core:
//   out = (H Wq) ((H Wk)^T (H Wv))
// No softmax, no feature map, no normalizing denominator; associativity is
// what removes the t x t score matrix.
template <typename S>
Var ila(Tape<S>& tape, Var h, Var wq, Var wk, Var wv) {
  if (tape.val(h).rank() != 2) fail(ErrorKind::dimension, "ila: slice must be [t,d]");
  Var q = tape.matmul(h, wq);
  Var k = tape.matmul(h, wk);
  Var v = tape.matmul(h, wv);
  Var ktv = tape.matmul(tape.transpose(k, {1, 0}), v);
  return tape.matmul(q, ktv);
}

// Multi-head linear attention applied independently to every (interval, area)
// slice of [N, A, t, d]; heads are split, run, concatenated, projected.
template <typename S>
Var ila_layer(Tape<S>& tape, Var h, const LayerVars<S>& lv, DropoutStream& drop) {
  const Shape& s = tape.val(h).shape();
  if (s.rank() != 4) fail(ErrorKind::dimension, "ila_layer: input must be [N,A,t,d]");
  const Index N = s.extent(0), A = s.extent(1), t = s.extent(2), d = s.extent(3);
  const Index n_heads = static_cast<Index>(lv.ila_q.size());
  const Index dh = d / n_heads;
  Var flat = tape.reshape(h, Shape{N * A * t, d});
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (Index hd = 0; hd < n_heads; ++hd) {
    Var q3 = tape.reshape(tape.matmul(flat, lv.ila_q[static_cast<std::size_t>(hd)]), Shape{N * A, t, dh});
    Var k3 = tape.reshape(tape.matmul(flat, lv.ila_k[static_cast<std::size_t>(hd)]), Shape{N * A, t, dh});
    Var v3 = tape.reshape(tape.matmul(flat, lv.ila_v[static_cast<std::size_t>(hd)]), Shape{N * A, t, dh});
    Var ktv = tape.bmm(k3, v3, true, false);  // [NA, dh, dh]
    heads.push_back(tape.bmm(q3, ktv));       // [NA, t, dh]
  }
  Var cat = tape.concat_lastaxis(heads);      // [NA, t, d]
  Var proj = tape.matmul(tape.reshape(cat, Shape{N * A * t, d}), lv.ila_out);
  return tape.reshape(drop.apply(tape, proj), Shape{N, A, t, d});
}

// Interval summaries: mean over local time, then LayerNorm; flat order
// s = interval * A + area.
template <typename S>
Var pool_and_norm(Tape<S>& tape, Var ila_out, Var gamma, Var beta) {
  const Shape& s = tape.val(ila_out).shape();
  if (s.rank() != 4) fail(ErrorKind::dimension, "pool_and_norm: input must be [N,A,t,d]");
  Var pooled = tape.avgpool_axis(ila_out, 2);                                  // [N,A,d]
  Var flat = tape.reshape(pooled, Shape{s.extent(0) * s.extent(1), s.extent(3)});  // [S,d]
  return tape.layernorm(flat, gamma, beta);
}

// Blocked entries of the causal sliding window: row i may attend to
// j in [i-w+1, i]. Row i always sees itself, so no row is fully masked.
inline std::shared_ptr<const std::vector<std::uint8_t>> window_mask(Index n, Index w) {
  if (w < 1) fail(ErrorKind::validation, "aswa: window must be >= 1");
  auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(n * n), 1);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - w + 1);
    for (Index j = lo; j <= i; ++j) (*mask)[static_cast<std::size_t>(i * n + j)] = 0;
  }
  return mask;
}

// Causal sliding-window softmax attention across interval summaries.
template <typename S>
Var aswa(Tape<S>& tape, Var pooled, const LayerVars<S>& lv, Index window, bool scale_scores,
         DropoutStream& drop) {
  const Shape& s = tape.val(pooled).shape();
  if (s.rank() != 2) fail(ErrorKind::dimension, "aswa: input must be [S,d]");
  const Index n = s.extent(0), d = s.extent(1);
  const Index n_heads = static_cast<Index>(lv.aswa_q.size());
  const Index dh = d / n_heads;
  const auto mask = window_mask(n, window);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (Index hd = 0; hd < n_heads; ++hd) {
    Var q = tape.matmul(pooled, lv.aswa_q[static_cast<std::size_t>(hd)]);
    Var k = tape.matmul(pooled, lv.aswa_k[static_cast<std::size_t>(hd)]);
    Var v = tape.matmul(pooled, lv.aswa_v[static_cast<std::size_t>(hd)]);
    Var scores = tape.matmul(q, tape.transpose(k, {1, 0}));  // [S,S]
    if (scale_scores) scores = tape.scale(scores, S(1.0 / std::sqrt(static_cast<double>(dh))));
    Var masked = tape.masked_fill(scores, mask, -std::numeric_limits<S>::infinity());
    Var probs = tape.softmax_lastaxis(masked);
    heads.push_back(tape.matmul(probs, v));
  }
  Var cat = tape.concat_lastaxis(heads);
  return drop.apply(tape, tape.matmul(cat, lv.aswa_out));
}

// One block: local linear attention and broadcast interval-level attention
// join the residual stream, then a pre-norm FFN.
//   Z  = ILA(H) + broadcast(ASWA(LN(pool(ILA(H))))) + H
//   H' = FFN(LN(Z)) + Z
template <typename S>
Var iaa_block(Tape<S>& tape, Var h, const LayerVars<S>& lv, const EncoderConfig& cfg,
              DropoutStream& drop) {
  const Shape& s = tape.val(h).shape();
  const Index N = s.extent(0), A = s.extent(1), t = s.extent(2), d = s.extent(3);

  Var ila_o = ila_layer(tape, h, lv, drop);
  Var pooled = pool_and_norm(tape, ila_o, lv.pool_gamma, lv.pool_beta);
  Var aswa_o = aswa(tape, pooled, lv, cfg.window, cfg.aswa_scale, drop);
  Var aswa4 = tape.repeat_axis(tape.reshape(aswa_o, Shape{N, A, 1, d}), 2, t);
  Var z = tape.add(tape.add(ila_o, aswa4), h);

  Var ln = tape.layernorm(z, lv.ffn_gamma, lv.ffn_beta);
  Var f1 = tape.add_broadcast(tape.matmul(tape.reshape(ln, Shape{N * A * t, d}), lv.ffn_w1), lv.ffn_b1);
  Var act = drop.apply(tape, tape.gelu(f1));
  Var f2 = tape.add_broadcast(tape.matmul(act, lv.ffn_w2), lv.ffn_b2);
  return tape.add(tape.reshape(f2, Shape{N, A, t, d}), z);
}

// Stack of blocks; zero layers is the identity.
template <typename S>
Var encode(Tape<S>& tape, Var tokens, const BoundParams<S>& bp, const EncoderConfig& cfg,
           DropoutStream& drop) {
  Var h = tokens;
  for (Index l = 0; l < cfg.n_layers; ++l) {
    const LayerVars<S> lv = bind_layer(bp, l, cfg.n_heads);
    h = iaa_block(tape, h, lv, cfg, drop);
  }
  return h;
}

}  // namespace unibci
