#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unibci/config.hpp"
#include "unibci/embedder.hpp"
#include "unibci/encoder.hpp"
#include "unibci/objective.hpp"
#include "unibci/tokenizer.hpp"

namespace unibci {

inline constexpr const char* kReconW1 = "recon.w1";
inline constexpr const char* kReconB1 = "recon.b1";
inline constexpr const char* kReconW2 = "recon.w2";
inline constexpr const char* kReconB2 = "recon.b2";
inline constexpr const char* kHeadW1 = "head.w1";
inline constexpr const char* kHeadB1 = "head.b1";
inline constexpr const char* kHeadW2 = "head.w2";
inline constexpr const char* kHeadB2 = "head.b2";

inline Index interval_count(const RunConfig& cfg) { return cfg.t_norm / cfg.interval; }

// Tokens per trial: N * A * t == t_norm * n_areas.
inline Index tokens_per_trial(const RunConfig& cfg) { return cfg.t_norm * cfg.n_areas; }

// Flattened encoder output entering the task head.
inline Index head_input_dim(const RunConfig& cfg) {
  const Index base = interval_count(cfg) * cfg.n_areas * cfg.embed_dim;
  return cfg.head_pool_t ? base : base * cfg.interval;
}

// One trial after the deterministic, tape-free preprocessing: normalized
// counts, the frozen context embedding, and the task target.
template <typename S>
struct PreparedTrial {
  NormalizedSpikes norm;
  Tensor<S> meta;               // [d_text]
  std::string session;
  Index class_label = -1;       // >= 0 for classification trials
  Tensor<S> reg_target;         // [t_norm, k] binned means for sequence labels
};

// Channel shuffling, when enabled, uses one corpus-wide permutation so every
// trial shares the same channel-to-area map.
inline std::optional<std::uint64_t> channel_permute_seed(const RunConfig& cfg) {
  if (!cfg.shuffle_channels) return std::nullopt;
  return mix64(cfg.seed, 40);
}

template <typename S>
PreparedTrial<S> prepare_trial(const SpikeRecording& rec, const RunConfig& cfg,
                               const ContextEmbedder& embedder) {
  PreparedTrial<S> out;
  out.norm = normalize(rec, cfg.t_norm, cfg.n_areas, cfg.area_size, channel_permute_seed(cfg));
  const std::vector<double> v = embedder.embed(render_context(rec.meta));
  if (static_cast<Index>(v.size()) != cfg.d_text)
    fail(ErrorKind::dimension, "model: context embedding width " + std::to_string(v.size()) +
                                   " != d_text " + std::to_string(cfg.d_text));
  out.meta = Tensor<S>(Shape{cfg.d_text});
  for (Index i = 0; i < cfg.d_text; ++i) out.meta[i] = static_cast<S>(v[static_cast<std::size_t>(i)]);
  out.session = rec.meta.session;
  if (rec.label_kind == LabelKind::class_index) {
    out.class_label = static_cast<Index>(rec.class_label);
  } else if (rec.label_kind == LabelKind::sequence) {
    const std::vector<double> binned =
        bin_label_sequence(rec.label_seq, rec.t_raw, rec.label_dim, cfg.t_norm);
    out.reg_target = Tensor<S>(Shape{cfg.t_norm, rec.label_dim});
    for (Index i = 0; i < out.reg_target.numel(); ++i)
      out.reg_target[i] = static_cast<S>(binned[static_cast<std::size_t>(i)]);
  }
  return out;
}

template <typename S>
std::vector<PreparedTrial<S>> prepare_corpus(const std::vector<SpikeRecording>& recs,
                                             const RunConfig& cfg,
                                             const ContextEmbedder& embedder) {
  std::vector<PreparedTrial<S>> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(prepare_trial<S>(r, cfg, embedder));
  return out;
}

template <typename S>
void add_mlp_head(ParamStore<S>& store, const char* w1, const char* b1, const char* w2,
                  const char* b2, Index in_dim, Index hidden, Index out_dim,
                  std::uint64_t seed) {
  Tensor<S> tw1(Shape{in_dim, hidden});
  Tensor<S> tw2(Shape{hidden, out_dim});
  Rng r1(mix64(seed, 1));
  fill_normal(tw1, r1, 0.02);
  Rng r2(mix64(seed, 2));
  fill_normal(tw2, r2, 0.02);
  store.add(w1, std::move(tw1));
  store.add(b1, Tensor<S>::zeros(Shape{hidden}));
  store.add(w2, std::move(tw2));
  store.add(b2, Tensor<S>::zeros(Shape{out_dim}));
}

template <typename S>
void add_recon_head(ParamStore<S>& store, const RunConfig& cfg) {
  add_mlp_head(store, kReconW1, kReconB1, kReconW2, kReconB2, cfg.embed_dim, cfg.recon_hidden,
               cfg.embed_dim, mix64(cfg.seed, 3));
}

template <typename S>
void add_task_head(ParamStore<S>& store, const RunConfig& cfg, Index out_dim) {
  add_mlp_head(store, kHeadW1, kHeadB1, kHeadW2, kHeadB2, head_input_dim(cfg), cfg.head_hidden,
               out_dim, mix64(cfg.seed, 4));
}

template <typename S>
struct Model {
  RunConfig cfg;
  ParamStore<S> params;
};

// Fresh model: tokenizer + encoder + reconstruction head. Task heads are
// added at fine-tuning time, replacing nothing.
template <typename S>
Model<S> make_model(const RunConfig& cfg) {
  validate_config(cfg);
  Model<S> m;
  m.cfg = cfg;
  init_tokenizer_params(m.params, tokenizer_dims(cfg), mix64(cfg.seed, 1));
  init_encoder_params(m.params, encoder_config(cfg), mix64(cfg.seed, 2));
  add_recon_head(m.params, cfg);
  return m;
}

template <typename S>
TokenizerVars bind_tokenizer(const BoundParams<S>& bp) {
  TokenizerVars tv;
  tv.w_e = bp[kTokWe];
  tv.b_e = bp[kTokBe];
  tv.w_proj = bp[kTokWproj];
  tv.t_pos = bp[kTokTpos];
  tv.a_pos = bp[kTokApos];
  return tv;
}

// Tokenization of one prepared trial: [N, A, t, d] token tensor plus the
// spike-only embedding in the same layout (the alternative target).
template <typename S>
struct TrialTokens {
  Var tokens;     // full tokens, [N,A,t,d]
  Var emb_only;   // channel embedding without context/positions, [N,A,t,d]
};

template <typename S>
TrialTokens<S> tokenize_trial(Tape<S>& tape, const PreparedTrial<S>& trial,
                              const BoundParams<S>& bp, const RunConfig& cfg) {
  const TokenizerVars tv = bind_tokenizer(bp);
  Var x_emb = embed_channels(tape, trial.norm, tv.w_e, tv.b_e);  // [A,T,d]
  Var meta = tape.constant(trial.meta);
  Var tokens = assemble_tokens(tape, x_emb, meta, tv);           // [T,A,d]
  TrialTokens<S> out;
  out.tokens = partition_intervals(tape, tokens, cfg.interval);
  out.emb_only = partition_intervals(tape, tape.transpose(x_emb, {1, 0, 2}), cfg.interval);
  return out;
}

template <typename S>
Var recon_head(Tape<S>& tape, Var enc_out, const BoundParams<S>& bp) {
  const Shape s = tape.val(enc_out).shape();
  Var flat = tape.reshape(enc_out, Shape{s.extent(0) * s.extent(1) * s.extent(2), s.extent(3)});
  Var h = tape.gelu(tape.add_broadcast(tape.matmul(flat, bp[kReconW1]), bp[kReconB1]));
  Var out = tape.add_broadcast(tape.matmul(h, bp[kReconW2]), bp[kReconB2]);
  return tape.reshape(out, s);
}

// Masked-reconstruction loss for one trial. The target branch is detached:
// the loss pulls predictions toward the target, never the reverse.
template <typename S>
Var pretrain_loss(Tape<S>& tape, const PreparedTrial<S>& trial, const BoundParams<S>& bp,
                  const RunConfig& cfg, const MaskPlan& plan, DropoutStream& drop) {
  TrialTokens<S> tt = tokenize_trial(tape, trial, bp, cfg);
  Var target = tape.detach(cfg.recon_target == "emb" ? tt.emb_only : tt.tokens);
  Var masked = apply_mask(tape, tt.tokens, plan);
  Var enc = encode(tape, masked, bp, encoder_config(cfg), drop);
  Var pred = recon_head(tape, enc, bp);
  return masked_l2_loss(tape, pred, target, plan);
}

// Task-head output for one trial: flat vector of out_dim scores
// (class logits, or a flattened [t_norm, k] regression sequence).
template <typename S>
Var task_output(Tape<S>& tape, const PreparedTrial<S>& trial, const BoundParams<S>& bp,
                const RunConfig& cfg, DropoutStream& drop) {
  TrialTokens<S> tt = tokenize_trial(tape, trial, bp, cfg);
  Var enc = encode(tape, tt.tokens, bp, encoder_config(cfg), drop);
  Var feats;
  if (cfg.head_pool_t) {
    Var pooled = tape.avgpool_axis(enc, 2);  // [N,A,d]
    feats = tape.reshape(pooled, Shape{1, head_input_dim(cfg)});
  } else {
    feats = tape.reshape(enc, Shape{1, head_input_dim(cfg)});
  }
  Var h = tape.gelu(tape.add_broadcast(tape.matmul(feats, bp[kHeadW1]), bp[kHeadB1]));
  Var out = tape.add_broadcast(tape.matmul(h, bp[kHeadW2]), bp[kHeadB2]);
  return tape.reshape(out, Shape{tape.val(out).extent(1)});
}

struct PretrainResult {
  std::vector<double> epoch_mean_loss;
};

// Epoch/batch loop: per-epoch reshuffle, per-batch gradient accumulation in
// a fixed trial order, one AdamW step per batch, cosine-annealed lr. Fully
// deterministic under (seed, dtype, single thread).
template <typename S>
PretrainResult pretrain(Model<S>& model, const std::vector<PreparedTrial<S>>& trials,
                        std::ostream* progress = nullptr) {
  const RunConfig& cfg = model.cfg;
  validate_config(cfg);
  if (trials.empty()) fail(ErrorKind::validation, "pretrain: empty corpus");
  const Index n = static_cast<Index>(trials.size());
  const Index j_tokens = tokens_per_trial(cfg);

  AdamWConfig ocfg;
  ocfg.beta1 = cfg.beta1;
  ocfg.beta2 = cfg.beta2;
  ocfg.eps = cfg.adam_eps;
  ocfg.weight_decay = cfg.weight_decay;
  OptimState<S> st = OptimState<S>::like(model.params);

  PretrainResult result;
  for (Index e = 0; e < cfg.epochs; ++e) {
    ocfg.lr = cosine_lr(e, cfg.epochs, cfg.lr, cfg.lr_min);
    Rng order_rng(mix64(cfg.seed, 500, static_cast<std::uint64_t>(e)));
    const std::vector<Index> order = order_rng.permutation(n);
    double loss_sum = 0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index stop = std::min<Index>(n, start + cfg.batch_size);
      std::vector<Tensor<S>> accum;
      accum.reserve(static_cast<std::size_t>(model.params.size()));
      for (Index i = 0; i < model.params.size(); ++i)
        accum.push_back(Tensor<S>::zeros(model.params.value(i).shape()));
      for (Index k = start; k < stop; ++k) {
        const Index idx = order[static_cast<std::size_t>(k)];
        Tape<S> tape;
        auto bp = BoundParams<S>::bind(tape, model.params);
        const MaskPlan plan = sample_mask(
            j_tokens, cfg.mask_ratio, mix64(cfg.seed, 600 + static_cast<std::uint64_t>(e),
                                            static_cast<std::uint64_t>(k)));
        DropoutStream drop{cfg.dropout,
                           mix64(cfg.seed, 700 + static_cast<std::uint64_t>(e),
                                 static_cast<std::uint64_t>(k)),
                           true, 0};
        Var loss = pretrain_loss(tape, trials[static_cast<std::size_t>(idx)], bp, cfg, plan, drop);
        loss_sum += static_cast<double>(tape.val(loss)[0]);
        tape.backward(loss);
        for (Index i = 0; i < model.params.size(); ++i) {
          const Tensor<S>& g = tape.grad(bp.vars[static_cast<std::size_t>(i)]);
          auto& a = accum[static_cast<std::size_t>(i)];
          for (Index x = 0; x < a.numel(); ++x) a[x] += g[x];
        }
      }
      const S inv_b = static_cast<S>(1.0 / static_cast<double>(stop - start));
      for (auto& a : accum)
        for (Index x = 0; x < a.numel(); ++x) a[x] *= inv_b;
      if (cfg.grad_clip > 0) clip_grads(accum, cfg.grad_clip);
      adamw_step(model.params, accum, st, ocfg);
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n));
    if (progress)
      (*progress) << "epoch " << e << "/" << cfg.epochs
                  << " mean_loss=" << result.epoch_mean_loss.back() << "\n";
  }
  return result;
}

inline std::string loss_curve_csv(const std::vector<double>& epoch_mean_loss) {
  std::string out = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < epoch_mean_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, epoch_mean_loss[e]);
    out += buf;
  }
  return out;
}

}  // namespace unibci
