#pragma once

#include "unibci/embedder.hpp"
#include "unibci/init.hpp"
#include "unibci/metadata.hpp"
#include "unibci/normalize.hpp"
#include "unibci/params.hpp"
#include "unibci/tape.hpp"

namespace unibci {

struct TokenizerDims {
  Index t_norm = 100;
  Index n_areas = 8;
  Index area_size = 32;
  Index d = 64;
  Index d_text = 384;
};

// Parameter names; registration order is fixed so checkpoints and optimizer
// state line up across runs.
inline constexpr const char* kTokWe = "tok.w_e";
inline constexpr const char* kTokBe = "tok.b_e";
inline constexpr const char* kTokWproj = "tok.w_proj";
inline constexpr const char* kTokTpos = "tok.t_pos";
inline constexpr const char* kTokApos = "tok.a_pos";

// Channel embedding scaled by fan-in, text projection by text width,
// positional tables small; bias starts at zero.
template <typename S>
void init_tokenizer_params(ParamStore<S>& store, const TokenizerDims& dims, std::uint64_t seed) {
  Tensor<S> w_e(Shape{dims.area_size, dims.d});
  Tensor<S> b_e(Shape{dims.d});
  Tensor<S> w_proj(Shape{dims.d_text, dims.d});
  Tensor<S> t_pos(Shape{dims.t_norm, dims.d});
  Tensor<S> a_pos(Shape{dims.n_areas, dims.d});
  Rng r0(mix64(seed, 10));
  fill_normal(w_e, r0, 1.0 / std::sqrt(static_cast<double>(dims.area_size)));
  Rng r1(mix64(seed, 11));
  fill_normal(w_proj, r1, 1.0 / std::sqrt(static_cast<double>(dims.d_text)));
  Rng r2(mix64(seed, 12));
  fill_normal(t_pos, r2, 0.02);
  Rng r3(mix64(seed, 13));
  fill_normal(a_pos, r3, 0.02);
  store.add(kTokWe, std::move(w_e));
  store.add(kTokBe, std::move(b_e));
  store.add(kTokWproj, std::move(w_proj));
  store.add(kTokTpos, std::move(t_pos));
  store.add(kTokApos, std::move(a_pos));
}

struct TokenizerVars {
  Var w_e, b_e, w_proj, t_pos, a_pos;
};

// Normalized counts as an [A, T, C] tensor (area-major so each area's
// [T, C] slab is contiguous for the shared embedding matmul).
template <typename S>
Tensor<S> counts_tensor(const NormalizedSpikes& ns) {
  Tensor<S> x(Shape{ns.n_areas, ns.t_norm, ns.area_size});
  for (Index a = 0; a < ns.n_areas; ++a)
    for (Index t = 0; t < ns.t_norm; ++t)
      for (Index c = 0; c < ns.area_size; ++c) x(a, t, c) = static_cast<S>(ns.at(t, a, c));
  return x;
}

// Shared linear embedding of every area's count rows: [A, T, C] -> [A, T, d].
template <typename S>
Var embed_channels(Tape<S>& tape, const NormalizedSpikes& ns, Var w_e, Var b_e) {
  const Tensor<S>& we = tape.val(w_e);
  if (we.rank() != 2 || we.extent(0) != ns.area_size)
    fail(ErrorKind::dimension, "tokenizer: w_e must be [area_size, d]");
  const Index d = we.extent(1);
  Var x = tape.constant(counts_tensor<S>(ns));
  Var flat = tape.reshape(x, Shape{ns.n_areas * ns.t_norm, ns.area_size});
  Var emb = tape.add_broadcast(tape.matmul(flat, w_e), b_e);
  return tape.reshape(emb, Shape{ns.n_areas, ns.t_norm, d});
}

// Embeds the rendered context sentence with the frozen encoder and inserts it
// as a constant; only the projection after it is trainable.
template <typename S>
Var context_constant(Tape<S>& tape, const ContextEmbedder& embedder, const MetadataRecord& meta) {
  const std::vector<double> v = embedder.embed(render_context(meta));
  Tensor<S> t(Shape{static_cast<Index>(v.size())});
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(v[static_cast<std::size_t>(i)]);
  return tape.constant(std::move(t));
}

// token[t,a] = emb[a,t] + W_proj^T meta + T_pos[t] + A_pos[a], canonical
// [T, A, d] layout.
template <typename S>
Var assemble_tokens(Tape<S>& tape, Var x_emb, Var meta_vec, const TokenizerVars& tv) {
  const Index d_text = tape.val(meta_vec).extent(0);
  const Index d = tape.val(tv.w_proj).extent(1);
  Var mp = tape.reshape(tape.matmul(tape.reshape(meta_vec, Shape{1, d_text}), tv.w_proj), Shape{d});
  Var with_meta = tape.add_broadcast(x_emb, mp);
  Var with_time = tape.add_broadcast(with_meta, tv.t_pos);  // [A,T,d] + [T,d]
  Var canonical = tape.transpose(with_time, {1, 0, 2});     // [T,A,d]
  return tape.add_broadcast(canonical, tv.a_pos);           // + [A,d]
}

// [T, A, d] -> [N, A, t, d] with N = T / t; t must divide T exactly.
template <typename S>
Var partition_intervals(Tape<S>& tape, Var tokens, Index t) {
  const Shape& s = tape.val(tokens).shape();
  if (s.rank() != 3) fail(ErrorKind::dimension, "partition: tokens must be [T,A,d]");
  const Index T = s.extent(0);
  if (t < 1 || T % t != 0)
    fail(ErrorKind::partition, "partition: interval size " + std::to_string(t) +
                                   " does not divide T " + std::to_string(T));
  const Index N = T / t;
  Var grouped = tape.reshape(tokens, Shape{N, t, s.extent(1), s.extent(2)});
  return tape.transpose(grouped, {0, 2, 1, 3});
}

// Exact inverse of partition_intervals.
template <typename S>
Var departition_intervals(Tape<S>& tape, Var x) {
  const Shape& s = tape.val(x).shape();
  if (s.rank() != 4) fail(ErrorKind::dimension, "departition: input must be [N,A,t,d]");
  Var ungrouped = tape.transpose(x, {0, 2, 1, 3});  // [N,t,A,d]
  return tape.reshape(ungrouped, Shape{s.extent(0) * s.extent(2), s.extent(1), s.extent(3)});
}

}  // namespace unibci
