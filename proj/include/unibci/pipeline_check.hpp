#pragma once

// End-to-end gradient validation. Builds a miniature f64 model, pushes one
// generated trial through tokenize -> mask -> encode -> reconstruct -> masked
// loss, and compares analytic gradients against central finite differences on
// a random subset of parameter coordinates.

#include "unibci/generators.hpp"
#include "unibci/gradcheck.hpp"
#include "unibci/model.hpp"

namespace unibci {

struct PipelineCheckSpec {
  Index n = 2;       // intervals per trial
  Index a = 2;       // areas
  Index t = 4;       // time bins per interval
  Index d = 8;       // embedding width
  Index heads = 2;
  Index layers = 2;
  Index window = 2;
  Index n_coords = 200;
  double step = 1e-5;
  double tol = 1e-5;
  std::uint64_t seed = 5;
  double mask_ratio = 0.5;
};

inline RunConfig pipeline_check_config(const PipelineCheckSpec& s) {
  if (s.n < 1 || s.a < 1 || s.t < 1 || s.d < 1)
    fail(ErrorKind::validation, "pipeline check: shape entries must be >= 1");
  RunConfig cfg;
  cfg.dtype = "f64";
  cfg.seed = s.seed;
  cfg.embed_dim = s.d;
  cfg.n_layers = s.layers;
  cfg.n_heads = s.heads;
  cfg.window = s.window;
  cfg.interval = s.t;
  cfg.t_norm = s.n * s.t;
  cfg.n_areas = s.a;
  cfg.area_size = 6;
  cfg.d_text = 16;
  cfg.ffn_mult = 2;
  cfg.recon_hidden = 12;
  validate_config(cfg);
  return cfg;
}

inline GradCheckReport pipeline_gradcheck(const PipelineCheckSpec& s) {
  const RunConfig cfg = pipeline_check_config(s);
  auto model = make_model<double>(cfg);

  CenterOutConfig g;
  g.n_trials = 1;
  g.n_units = cfg.n_areas * cfg.area_size;
  g.t_raw = 2 * cfg.t_norm;
  g.n_classes = 4;
  g.seed = mix64(s.seed, 9);
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<double>(gen_center_out(g), cfg, emb);
  const MaskPlan plan = sample_mask(tokens_per_trial(cfg), s.mask_ratio, mix64(s.seed, 2));

  // The reconstruction target is detached during training, so the probe must
  // hold it at the unperturbed value while parameters move.
  Tensor<double> target_value;
  {
    Tape<double> t0;
    auto bp0 = BoundParams<double>::bind(t0, model.params);
    target_value = t0.val(tokenize_trial(t0, trials[0], bp0, cfg).tokens);
  }

  std::vector<Tensor<double>> params;
  for (Index i = 0; i < model.params.size(); ++i) params.push_back(model.params.value(i));
  return gradcheck(
      [&](Tape<double>& t, const std::vector<Var>& v) {
        BoundParams<double> bp;
        bp.tape = &t;
        bp.store = &model.params;
        bp.vars = v;
        DropoutStream drop;
        TrialTokens<double> tt = tokenize_trial(t, trials[0], bp, cfg);
        Var masked = apply_mask(t, tt.tokens, plan);
        Var enc = encode(t, masked, bp, encoder_config(cfg), drop);
        Var pred = recon_head(t, enc, bp);
        return masked_l2_loss(t, pred, t.constant(target_value), plan);
      },
      params, GradCheckOptions{s.step, s.tol, s.n_coords, mix64(s.seed, 4)});
}

}  // namespace unibci
