#include <doctest.h>

#include "helpers.hpp"
#include "unibci/generators.hpp"
#include "unibci/gradcheck.hpp"
#include "unibci/model.hpp"

using namespace unibci;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

// Small end-to-end setup shared by the training tests.
RunConfig tiny_config() {
  RunConfig c;
  c.dtype = "f64";
  c.seed = 11;
  c.embed_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.window = 3;
  c.interval = 5;
  c.t_norm = 20;
  c.n_areas = 4;
  c.area_size = 8;
  c.d_text = 32;
  c.ffn_mult = 2;
  c.recon_hidden = 24;
  c.head_hidden = 24;
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

std::vector<SpikeRecording> tiny_corpus(Index n_trials, std::uint64_t seed) {
  CenterOutConfig g;
  g.n_trials = n_trials;
  g.n_units = 20;
  g.t_raw = 100;
  g.n_classes = 4;
  g.n_sources = 2;
  g.seed = seed;
  return gen_center_out(g);
}

// Independent scalar AdamW, followed coordinate by coordinate.
struct RefAdam {
  double m = 0, v = 0;
  long step = 0;
  double update(double p, double g, const AdamWConfig& c) {
    ++step;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mhat = m / (1 - std::pow(c.beta1, step));
    const double vhat = v / (1 - std::pow(c.beta2, step));
    return p - c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p);
  }
};

}  // namespace

TEST_CASE("mask sampling: exact count, determinism, edge ratios") {
  Rng rng(90);
  for (int rep = 0; rep < 300; ++rep) {
    const Index j = 1 + static_cast<Index>(rng.below(2000));
    const double ratio = rng.uniform();
    auto plan = sample_mask(j, ratio, rep);
    CHECK(plan.count() == static_cast<Index>(std::floor(ratio * static_cast<double>(j))));
    CHECK(static_cast<Index>(plan.flags.size()) == j);
  }
  auto a = sample_mask(137, 0.37, 5);
  auto b = sample_mask(137, 0.37, 5);
  CHECK(a.flags == b.flags);
  CHECK(sample_mask(64, 0.0, 1).count() == 0);
  CHECK(sample_mask(64, 1.0, 1).count() == 64);
  CHECK_THROWS_AS(sample_mask(0, 0.5, 1), Error);
  CHECK_THROWS_AS(sample_mask(8, -0.1, 1), Error);
  CHECK_THROWS_AS(sample_mask(8, 1.1, 1), Error);
}

TEST_CASE("mask application: all-keep identity, all-mask zero, single-token surgery") {
  Rng rng(91);
  const Index N = 2, A = 3, t = 4, d = 5;
  auto x = rand_tensor<double>(Shape{N, A, t, d}, rng);
  const Index J = N * A * t;

  MaskPlan none;
  none.flags.assign(static_cast<std::size_t>(J), 0);
  MaskPlan all;
  all.flags.assign(static_cast<std::size_t>(J), 1);

  Tape<double> tape;
  Var v = tape.constant(x);
  CHECK(max_abs_diff(tape.val(apply_mask(tape, v, none)), x) == 0.0);
  auto zeroed = tape.val(apply_mask(tape, v, all));
  for (Index i = 0; i < zeroed.numel(); ++i) CHECK(zeroed[i] == 0.0);

  // token j = (i*A + a)*t + u is the only one zeroed
  const Index ti = 1, ta = 2, tu = 3;
  MaskPlan one;
  one.flags.assign(static_cast<std::size_t>(J), 0);
  one.flags[static_cast<std::size_t>((ti * A + ta) * t + tu)] = 1;
  auto got = tape.val(apply_mask(tape, v, one));
  for (Index i = 0; i < N; ++i)
    for (Index a = 0; a < A; ++a)
      for (Index u = 0; u < t; ++u)
        for (Index f = 0; f < d; ++f) {
          const bool hit = (i == ti && a == ta && u == tu);
          CHECK(got(i, a, u, f) == (hit ? 0.0 : x(i, a, u, f)));
        }

  MaskPlan wrong;
  wrong.flags.assign(static_cast<std::size_t>(J + 1), 0);
  CHECK_THROWS_AS(apply_mask(tape, v, wrong), Error);
}

TEST_CASE("masked loss: value semantics and the unmasked blind spot") {
  Rng rng(92);
  const Index N = 2, A = 2, t = 3, d = 4;
  const Index J = N * A * t;
  auto target = rand_tensor<double>(Shape{N, A, t, d}, rng);

  MaskPlan plan;
  plan.flags.assign(static_cast<std::size_t>(J), 0);
  plan.flags[5] = 1;
  plan.flags[9] = 1;

  {
    Tape<double> tape;
    Var p = tape.constant(target);
    Var tg = tape.constant(target);
    CHECK(tape.val(masked_l2_loss(tape, p, tg, plan))[0] == 0.0);
  }
  {
    // one masked token, difference [1,0,0,0] -> loss exactly 1
    MaskPlan single;
    single.flags.assign(static_cast<std::size_t>(J), 0);
    single.flags[5] = 1;
    auto pred = target;
    pred[5 * d + 0] += 1.0;
    Tape<double> tape;
    Var loss = masked_l2_loss(tape, tape.constant(pred), tape.constant(target), single);
    CHECK(tape.val(loss)[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    // wrecking unmasked predictions does not move the loss
    auto pred = target;
    pred[5 * d + 1] += 0.25;
    pred[9 * d + 2] -= 0.5;
    Tape<double> t1;
    const double base =
        t1.val(masked_l2_loss(t1, t1.constant(pred), t1.constant(target), plan))[0];
    auto wrecked = pred;
    for (Index j = 0; j < J; ++j)
      if (!plan.flags[static_cast<std::size_t>(j)])
        for (Index f = 0; f < d; ++f) wrecked[j * d + f] = 1e6;
    Tape<double> t2;
    const double same =
        t2.val(masked_l2_loss(t2, t2.constant(wrecked), t2.constant(target), plan))[0];
    CHECK(base == same);
    // and the mean normalization is by masked count
    CHECK(base == doctest::Approx((0.25 * 0.25 + 0.5 * 0.5) / 2.0).epsilon(1e-15));
  }
  {
    MaskPlan empty;
    empty.flags.assign(static_cast<std::size_t>(J), 0);
    Tape<double> tape;
    Var p = tape.constant(target);
    CHECK_THROWS_AS(masked_l2_loss(tape, p, p, empty), Error);
  }
}

TEST_CASE("masked loss gradient is exactly zero at unmasked predictions") {
  Rng rng(93);
  const Index N = 2, A = 2, t = 2, d = 3;
  const Index J = N * A * t;
  auto pred0 = rand_tensor<double>(Shape{N, A, t, d}, rng);
  auto target = rand_tensor<double>(Shape{N, A, t, d}, rng);
  auto plan = sample_mask(J, 0.4, 17);
  REQUIRE(plan.count() == 3);

  Tape<double> tape;
  Var p = tape.leaf(pred0);
  Var loss = masked_l2_loss(tape, p, tape.constant(target), plan);
  tape.backward(loss);
  const auto& g = tape.grad(p);
  for (Index j = 0; j < J; ++j)
    for (Index f = 0; f < d; ++f) {
      const double expect = plan.flags[static_cast<std::size_t>(j)]
                                ? 2.0 * (pred0[j * d + f] - target[j * d + f]) / 3.0
                                : 0.0;
      if (!plan.flags[static_cast<std::size_t>(j)])
        CHECK(g[j * d + f] == 0.0);
      else
        CHECK(g[j * d + f] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("cosine schedule hits its frozen anchor points") {
  CHECK(cosine_lr(0, 40, 5e-4, 1e-5) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(cosine_lr(40, 40, 5e-4, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cosine_lr(20, 40, 5e-4, 1e-5) == doctest::Approx(2.55e-4).epsilon(1e-12));
  // monotone non-increasing across the whole ramp
  double prev = cosine_lr(0, 40, 5e-4, 1e-5);
  for (Index e = 1; e <= 40; ++e) {
    const double cur = cosine_lr(e, 40, 5e-4, 1e-5);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS_AS(cosine_lr(41, 40, 5e-4, 1e-5), Error);
  CHECK_THROWS_AS(cosine_lr(-1, 40, 5e-4, 1e-5), Error);
}

TEST_CASE("adamw matches the scalar reference walk to 1e-12") {
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.05;
  ParamStore<double> params;
  params.add("p", Tensor<double>(Shape{3}, {0.5, -1.25, 2.0}));
  OptimState<double> st = OptimState<double>::like(params);
  std::vector<RefAdam> ref(3);
  std::vector<double> refp = {0.5, -1.25, 2.0};

  Rng rng(94);
  for (int step = 0; step < 50; ++step) {
    Tensor<double> g(Shape{3});
    for (Index i = 0; i < 3; ++i) g[i] = rng.normal();
    for (Index i = 0; i < 3; ++i)
      refp[static_cast<std::size_t>(i)] =
          ref[static_cast<std::size_t>(i)].update(refp[static_cast<std::size_t>(i)], g[i], cfg);
    adamw_step(params, {g}, st, cfg);
    for (Index i = 0; i < 3; ++i)
      CHECK(params["p"][i] == doctest::Approx(refp[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  CHECK(st.step == 50);
}

TEST_CASE("adamw degenerate steps: zero grad is pure decay, zero decay is a fixed point") {
  {
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.0;
    ParamStore<double> params;
    params.add("p", Tensor<double>(Shape{2}, {3.0, -4.0}));
    OptimState<double> st = OptimState<double>::like(params);
    adamw_step(params, {Tensor<double>::zeros(Shape{2})}, st, cfg);
    CHECK(params["p"][0] == 3.0);
    CHECK(params["p"][1] == -4.0);
  }
  {
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.1;
    ParamStore<double> params;
    params.add("p", Tensor<double>(Shape{1}, {5.0}));
    OptimState<double> st = OptimState<double>::like(params);
    adamw_step(params, {Tensor<double>::zeros(Shape{1})}, st, cfg);
    CHECK(params["p"][0] == doctest::Approx(5.0 * (1.0 - 1e-2 * 0.1)).epsilon(1e-15));
  }
  {
    ParamStore<double> params;
    params.add("p", Tensor<double>(Shape{2}));
    OptimState<double> st = OptimState<double>::like(params);
    CHECK_THROWS_AS(adamw_step(params, {}, st, AdamWConfig{}), Error);
  }
}

TEST_CASE("gradient clipping rescales only above the threshold") {
  std::vector<Tensor<double>> grads;
  grads.push_back(Tensor<double>(Shape{2}, {3.0, 0.0}));
  grads.push_back(Tensor<double>(Shape{1}, {4.0}));
  CHECK(global_grad_norm(grads) == doctest::Approx(5.0).epsilon(1e-15));

  auto below = grads;
  clip_grads(below, 10.0);
  CHECK(below[0][0] == 3.0);
  CHECK(below[1][0] == 4.0);

  auto above = grads;
  clip_grads(above, 1.0);
  CHECK(global_grad_norm(above) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(above[0][0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(clip_grads(above, 0.0), Error);
}

TEST_CASE("fully masked pretraining severs the tokenizer: target-only gradients vanish") {
  RunConfig cfg = tiny_config();
  auto recs = tiny_corpus(2, 21);
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<double>(recs, cfg, emb);
  auto model = make_model<double>(cfg);

  Tape<double> tape;
  auto bp = BoundParams<double>::bind(tape, model.params);
  const MaskPlan plan = sample_mask(tokens_per_trial(cfg), 1.0, 3);
  DropoutStream drop;  // eval mode so dropout cannot hide a leak
  Var loss = pretrain_loss(tape, trials[0], bp, cfg, plan, drop);
  tape.backward(loss);

  double tok_grad = 0, other_grad = 0;
  for (Index i = 0; i < model.params.size(); ++i) {
    const std::string& name = model.params.names()[static_cast<std::size_t>(i)];
    const auto& g = tape.grad(bp.vars[static_cast<std::size_t>(i)]);
    double mx = 0;
    for (Index x = 0; x < g.numel(); ++x) mx = std::max(mx, std::abs(g[x]));
    if (name.rfind("tok.", 0) == 0)
      tok_grad = std::max(tok_grad, mx);
    else
      other_grad = std::max(other_grad, mx);
  }
  CHECK(tok_grad == 0.0);   // reaches the loss only through the detached target
  CHECK(other_grad > 0.0);  // encoder/head still learn
}

TEST_CASE("embedding-only reconstruction target changes the loss value") {
  RunConfig cfg = tiny_config();
  auto recs = tiny_corpus(1, 22);
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<double>(recs, cfg, emb);
  auto model = make_model<double>(cfg);
  const MaskPlan plan = sample_mask(tokens_per_trial(cfg), 0.5, 4);

  auto loss_with = [&](const std::string& target) {
    RunConfig c2 = cfg;
    c2.recon_target = target;
    Tape<double> tape;
    auto bp = BoundParams<double>::bind(tape, model.params);
    DropoutStream drop;
    return tape.val(pretrain_loss(tape, trials[0], bp, c2, plan, drop))[0];
  };
  const double lt = loss_with("token");
  const double le = loss_with("emb");
  CHECK(std::isfinite(lt));
  CHECK(std::isfinite(le));
  CHECK(lt != le);
}

TEST_CASE("tiny pretraining pass: shapes, csv, and bitwise determinism") {
  RunConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.batch_size = 3;  // 7 trials -> ragged final batch
  auto recs = tiny_corpus(7, 23);
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<double>(recs, cfg, emb);

  auto run = [&]() {
    auto model = make_model<double>(cfg);
    auto res = pretrain(model, trials);
    return std::make_pair(std::move(model), std::move(res));
  };
  auto [m1, r1] = run();
  auto [m2, r2] = run();

  REQUIRE(r1.epoch_mean_loss.size() == 2);
  for (double l : r1.epoch_mean_loss) CHECK(std::isfinite(l));
  CHECK(r1.epoch_mean_loss == r2.epoch_mean_loss);  // bitwise
  for (Index i = 0; i < m1.params.size(); ++i)
    CHECK(max_abs_diff(m1.params.value(i), m2.params.value(i)) == 0.0);

  // parameters moved
  auto fresh = make_model<double>(cfg);
  double moved = 0;
  for (Index i = 0; i < m1.params.size(); ++i)
    moved = std::max(moved, max_abs_diff(m1.params.value(i), fresh.params.value(i)));
  CHECK(moved > 0.0);

  const std::string csv = loss_curve_csv(r1.epoch_mean_loss);
  CHECK(csv.rfind("epoch,mean_loss\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("pretraining loss descends on a small corpus") {
  RunConfig cfg = tiny_config();
  cfg.dtype = "f32";
  cfg.epochs = 15;
  cfg.batch_size = 4;
  cfg.lr = 2e-3;
  auto recs = tiny_corpus(16, 24);
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<float>(recs, cfg, emb);
  auto model = make_model<float>(cfg);
  auto res = pretrain(model, trials);
  REQUIRE(res.epoch_mean_loss.size() == 15);
  CHECK(res.epoch_mean_loss.back() < res.epoch_mean_loss.front());
}

TEST_CASE("full pipeline gradient check: tokenize, encode, reconstruct, masked loss") {
  RunConfig cfg;
  cfg.dtype = "f64";
  cfg.seed = 5;
  cfg.embed_dim = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.window = 2;
  cfg.interval = 4;
  cfg.t_norm = 8;
  cfg.n_areas = 2;
  cfg.area_size = 6;
  cfg.d_text = 16;
  cfg.ffn_mult = 2;
  cfg.recon_hidden = 12;
  auto model = make_model<double>(cfg);

  CenterOutConfig g;
  g.n_trials = 1;
  g.n_units = 12;
  g.t_raw = 16;
  g.n_classes = 4;
  g.seed = 9;
  StubEmbedder emb(cfg.d_text);
  auto trials = prepare_corpus<double>(gen_center_out(g), cfg, emb);
  const MaskPlan plan = sample_mask(tokens_per_trial(cfg), 0.5, 2);

  // Freeze the reconstruction target at its unperturbed value: the loss
  // gradient treats the target as a constant (that is what detaching means),
  // so the finite-difference probe must evaluate the same fixed-target loss.
  Tensor<double> target_value;
  {
    Tape<double> t0;
    auto bp0 = BoundParams<double>::bind(t0, model.params);
    target_value = t0.val(tokenize_trial(t0, trials[0], bp0, cfg).tokens);
  }

  std::vector<Tensor<double>> params;
  for (Index i = 0; i < model.params.size(); ++i) params.push_back(model.params.value(i));
  auto rep = gradcheck(
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
      params, GradCheckOptions{1e-5, 1e-5, 150, 8});
  INFO("max_rel_err=" << rep.max_rel_err);
  CHECK(rep.pass);
}

TEST_CASE("task head output dims for both pooling modes") {
  RunConfig cfg = tiny_config();
  CHECK(tokens_per_trial(cfg) == 80);
  CHECK(head_input_dim(cfg) == 4 * 4 * 5 * 16);
  RunConfig pooled = cfg;
  pooled.head_pool_t = true;
  CHECK(head_input_dim(pooled) == 4 * 4 * 16);

  auto recs = tiny_corpus(1, 25);
  StubEmbedder emb(cfg.d_text);
  for (RunConfig* c : {&cfg, &pooled}) {
    auto trials = prepare_corpus<double>(recs, *c, emb);
    auto model = make_model<double>(*c);
    add_task_head(model.params, *c, 4);
    Tape<double> tape;
    auto bp = BoundParams<double>::bind(tape, model.params);
    DropoutStream drop;
    Var out = task_output(tape, trials[0], bp, *c, drop);
    CHECK(tape.val(out).shape() == Shape{4});
    CHECK(all_finite(tape.val(out)));
  }
}
