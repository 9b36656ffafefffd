#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "helpers.hpp"
#include "unibci/bench.hpp"
#include "unibci/generators.hpp"

using namespace unibci;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected an Error");
}

// multiply-add count of a [p,q] x [q,r] product
double macs(Index p, Index q, Index r) {
  return static_cast<double>(p) * static_cast<double>(q) * static_cast<double>(r);
}

Mat rand_mat(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

double max_abs(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("flop models match instrumented dataflow enumerations") {
  // hand count at the smallest shape: 3 projections of 8 MACs each, two
  // chained products of 8 MACs each -> 40 MACs -> 80 flops
  CHECK(flops_ila(1, 1, 2, 2) == 80.0);

  Rng rng(401);
  for (int rep = 0; rep < 60; ++rep) {
    const Index n = 1 + static_cast<Index>(rng.below(3));
    const Index a = 1 + static_cast<Index>(rng.below(4));
    const Index t = 1 + static_cast<Index>(rng.below(9));
    const Index d = 1 + static_cast<Index>(rng.below(7));
    const double slices = static_cast<double>(n) * static_cast<double>(a);

    // ila: H Wq, H Wk, H Wv, then K^T V and Q (K^T V)
    const double ila_macs =
        slices * (3.0 * macs(t, d, d) + macs(d, t, d) + macs(t, d, d));
    CHECK(flops_ila(n, a, t, d) == 2.0 * ila_macs);

    // dense attention: projections, Q K^T, then P V
    const double full_macs = slices * (3.0 * macs(t, d, d) + macs(t, d, t) + macs(t, t, d));
    CHECK(flops_full_attn(n, a, t, d) == 2.0 * full_macs);
  }

  for (Index s : {1, 3, 7, 10, 64})
    for (Index w : {1, 2, 7, 10, 100}) {
      double positions = 0;
      for (Index i = 0; i < s; ++i) positions += static_cast<double>(std::min<Index>(i + 1, w));
      CHECK(window_positions(s, w) == positions);
      for (Index d : {1, 4, 16}) {
        // projections plus per-row window scoring and mixing
        const double aswa_macs = 3.0 * macs(s, d, d) + 2.0 * positions * static_cast<double>(d);
        CHECK(flops_aswa(s, w, d) == 2.0 * aswa_macs);
      }
    }

  // global causal attention is the w >= s limit
  CHECK(flops_global_attn(64, 16) == flops_aswa(64, 64, 16));

  // scaling identities
  CHECK(flops_ila(2, 4, 64, 32) == 2.0 * flops_ila(2, 4, 32, 32));
  CHECK(flops_ila(2, 4, 32, 64) == 4.0 * flops_ila(2, 4, 32, 32));
  CHECK(kind_of([] { flops_ila(0, 1, 1, 1); }) == ErrorKind::validation);
  CHECK(kind_of([] { flops_aswa(4, 0, 4); }) == ErrorKind::validation);
}

TEST_CASE("benchmark ila kernel equals the tape implementation") {
  Rng rng(402);
  for (int rep = 0; rep < 10; ++rep) {
    const Index t = 2 + static_cast<Index>(rng.below(14));
    const Index d = 1 + static_cast<Index>(rng.below(12));
    Mat h = rand_mat(t, d, rng);
    Mat wq = rand_mat(d, d, rng, 0.5), wk = rand_mat(d, d, rng, 0.5), wv = rand_mat(d, d, rng, 0.5);

    Tape<double> tape;
    auto tensor_of = [&](const Mat& m) {
      Tensor<double> x(Shape{m.rows(), m.cols()});
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) x(i, j) = m(i, j);
      return tape.constant(std::move(x));
    };
    const Tensor<double>& got =
        tape.val(ila(tape, tensor_of(h), tensor_of(wq), tensor_of(wk), tensor_of(wv)));
    const Mat want = ila_kernel(h, wq, wk, wv);
    double diff = 0;
    for (Index i = 0; i < t; ++i)
      for (Index j = 0; j < d; ++j) diff = std::max(diff, std::abs(got(i, j) - want(i, j)));
    CHECK(diff < 1e-12);
  }
}

TEST_CASE("windowed kernel equals dense masked softmax attention") {
  Rng rng(403);
  for (int rep = 0; rep < 12; ++rep) {
    const Index s = 3 + static_cast<Index>(rng.below(30));
    const Index d = 1 + static_cast<Index>(rng.below(8));
    const Index w = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(s + 4)));
    Mat q = rand_mat(s, d, rng), k = rand_mat(s, d, rng), v = rand_mat(s, d, rng);

    // dense oracle: mask scores outside [i-w+1, i], softmax rows, mix values
    Mat want(s, d);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Index i = 0; i < s; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(s),
                                 -std::numeric_limits<double>::infinity());
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = std::max<Index>(0, i - w + 1); j <= i; ++j) {
        double dot = 0;
        for (Index c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
        scores[static_cast<std::size_t>(j)] = dot * inv_scale;
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      double denom = 0;
      for (Index j = 0; j < s; ++j)
        if (std::isfinite(scores[static_cast<std::size_t>(j)]))
          denom += std::exp(scores[static_cast<std::size_t>(j)] - mx);
      for (Index c = 0; c < d; ++c) {
        double acc = 0;
        for (Index j = 0; j < s; ++j)
          if (std::isfinite(scores[static_cast<std::size_t>(j)]))
            acc += std::exp(scores[static_cast<std::size_t>(j)] - mx) / denom * v(j, c);
        want(i, c) = acc;
      }
    }
    CHECK(max_abs(aswa_window_kernel(q, k, v, w), want) < 1e-10);
  }

  // a window covering the whole sequence is exactly global causal attention
  Mat q = rand_mat(24, 6, rng), k = rand_mat(24, 6, rng), v = rand_mat(24, 6, rng);
  CHECK(max_abs(aswa_window_kernel(q, k, v, 24), global_causal_kernel(q, k, v)) < 1e-12);
  CHECK(max_abs(aswa_window_kernel(q, k, v, 1000), global_causal_kernel(q, k, v)) < 1e-12);

  CHECK(kind_of([&] { aswa_window_kernel(q, k, v, 0); }) == ErrorKind::validation);
  CHECK(kind_of([&] {
          Mat bad = rand_mat(3, 6, rng);
          aswa_window_kernel(q, bad, v, 2);
        }) == ErrorKind::dimension);
}

TEST_CASE("dense attention kernel matches a direct scalar evaluation") {
  Rng rng(404);
  const Index t = 9, d = 5;
  Mat h = rand_mat(t, d, rng);
  Mat wq = rand_mat(d, d, rng), wk = rand_mat(d, d, rng), wv = rand_mat(d, d, rng);
  const Mat q = h * wq, k = h * wk, v = h * wv;
  Mat want(t, d);
  for (Index i = 0; i < t; ++i) {
    std::vector<double> row(static_cast<std::size_t>(t));
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < t; ++j) {
      double dot = 0;
      for (Index c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      row[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, row[static_cast<std::size_t>(j)]);
    }
    double denom = 0;
    for (double x : row) denom += std::exp(x - mx);
    for (Index c = 0; c < d; ++c) {
      double acc = 0;
      for (Index j = 0; j < t; ++j)
        acc += std::exp(row[static_cast<std::size_t>(j)] - mx) / denom * v(j, c);
      want(i, c) = acc;
    }
  }
  CHECK(max_abs(full_attn_kernel(h, wq, wk, wv), want) < 1e-10);
}

TEST_CASE("log-log slope fit recovers exact power laws") {
  std::vector<double> x = {2, 4, 8, 16, 32};
  for (double p : {0.5, 1.0, 1.5, 2.0}) {
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, p));
    CHECK(fit_loglog_slope(x, y) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(kind_of([] { fit_loglog_slope({1, 2}, {1}); }) == ErrorKind::dimension);
  CHECK(kind_of([] { fit_loglog_slope({1}, {1}); }) == ErrorKind::contract);
  CHECK(kind_of([] { fit_loglog_slope({1, -2}, {1, 1}); }) == ErrorKind::validation);
  CHECK(kind_of([] { fit_loglog_slope({3, 3}, {1, 2}); }) == ErrorKind::degenerate);
}

TEST_CASE("timing harness produces positive medians and stable checksums") {
  const KernelInputs in = make_kernel_inputs(8, 4, 7);
  auto fn = [&] { return ila_kernel(in.h, in.wq, in.wk, in.wv).sum(); };
  double c1 = 0, c2 = 0;
  const double t1 = median_wall_ns(fn, 5, 1, &c1);
  const double t2 = median_wall_ns(fn, 5, 1, &c2);
  CHECK(t1 > 0);
  CHECK(t2 > 0);
  CHECK(c1 == c2);  // same math, same operands
  CHECK(kind_of([&] { median_wall_ns(fn, 0, 1); }) == ErrorKind::validation);
}

TEST_CASE("sweeps populate rows, slopes, and the pinned CSV schema") {
  CHECK(parse_component("ila") == BenchComponent::ila);
  CHECK(parse_component("full") == BenchComponent::full_attn);
  CHECK(parse_component("full_attn") == BenchComponent::full_attn);
  CHECK(parse_component("aswa") == BenchComponent::aswa);
  CHECK(parse_component("global") == BenchComponent::global_attn);
  CHECK(kind_of([] { parse_component("softmax"); }) == ErrorKind::validation);

  BenchShape base;
  base.n = 1;
  base.a = 1;
  base.d = 8;
  auto res = bench_sweep(BenchComponent::ila, base, {4, 8, 16}, 5, 1);
  REQUIRE(res.rows.size() == 3);
  for (const auto& r : res.rows) {
    CHECK(r.wall_ns > 0);
    CHECK(r.reps == 5);
    CHECK(r.warmups == 1);
    CHECK(r.shape.s == 0);
    CHECK(r.shape.w == 0);
    CHECK(r.flops == flops_ila(1, 1, r.shape.t, 8));
  }
  CHECK(res.rows[0].shape.t == 4);
  CHECK(res.rows[2].shape.t == 16);
  CHECK(std::isfinite(res.slope));
  CHECK(res.inversions >= 0);

  const std::string csv = timing_csv(res.rows);
  CHECK(csv.rfind("component,N,A,t,d,S,w,wall_ns,flops\n", 0) == 0);
  CHECK(csv.find("\nila,1,1,4,8,0,0,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  BenchShape sbase;
  sbase.d = 8;
  sbase.w = 3;
  auto sres = bench_sweep(BenchComponent::aswa, sbase, {8, 16}, 3, 1);
  CHECK(sres.rows[0].shape.s == 8);
  CHECK(sres.rows[0].shape.t == 0);
  CHECK(sres.rows[0].flops == flops_aswa(8, 3, 8));

  CHECK(kind_of([&] { bench_sweep(BenchComponent::ila, base, {4}, 3, 1); }) ==
        ErrorKind::validation);
  CHECK(kind_of([&] { bench_sweep(BenchComponent::ila, base, {8, 4}, 3, 1); }) ==
        ErrorKind::validation);

  for (BenchComponent c : {BenchComponent::ila, BenchComponent::full_attn, BenchComponent::aswa,
                           BenchComponent::global_attn}) {
    const auto values = default_sweep_values(c);
    CHECK(values.size() >= 4);
    for (std::size_t i = 1; i < values.size(); ++i) CHECK(values[i] > values[i - 1]);
    const BenchShape b = default_sweep_base(c);
    CHECK(b.d >= 1);
  }
}

TEST_CASE("expansion diagnostic: metadata spread raises the log-determinant") {
  Rng rng(405);
  const Index dim = 8, n = 64;

  // identical spike rows: spike covariance is exactly zero before eps
  Tensor<double> spike(Shape{n, dim});
  std::vector<double> u(static_cast<std::size_t>(dim));
  for (auto& x : u) x = rng.normal();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) spike(i, j) = u[static_cast<std::size_t>(j)];

  // eight distinct context offsets cycling over the rows
  std::vector<std::vector<double>> metas(8, std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& m : metas)
    for (auto& x : m) x = rng.normal();
  Tensor<double> joint(Shape{n, dim});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j)
      joint(i, j) = spike(i, j) + metas[static_cast<std::size_t>(i % 8)][static_cast<std::size_t>(j)];

  const double eps = 1e-6;
  auto rep = expansion_diag(spike, joint, eps);
  CHECK(rep.logdet_spike == doctest::Approx(dim * std::log(eps)).epsilon(1e-9));
  CHECK(rep.logdet_joint > rep.logdet_spike);
  CHECK(rep.n_samples == n);
  CHECK(rep.dim == dim);
  CHECK(!rep.ill_conditioned);

  // identical context for every row: a pure shift, logdet unchanged
  Tensor<double> spike2(Shape{n, dim});
  for (Index i = 0; i < spike2.numel(); ++i) spike2[i] = rng.normal();
  Tensor<double> joint2 = spike2;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) joint2(i, j) += metas[0][static_cast<std::size_t>(j)];
  auto rep2 = expansion_diag(spike2, joint2, eps);
  CHECK(std::abs(rep2.logdet_joint - rep2.logdet_spike) < expansion_shift_bound(dim, eps));

  // shifting every row of both matrices by one constant moves nothing
  Tensor<double> spike3 = spike2, joint3 = joint2;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) {
      spike3(i, j) += 3.25 * u[static_cast<std::size_t>(j)];
      joint3(i, j) += 3.25 * u[static_cast<std::size_t>(j)];
    }
  auto rep3 = expansion_diag(spike3, joint3, eps);
  CHECK(std::abs(rep3.logdet_spike - rep2.logdet_spike) < expansion_shift_bound(dim, eps));
  CHECK(std::abs(rep3.logdet_joint - rep2.logdet_joint) < expansion_shift_bound(dim, eps));
}

TEST_CASE("effective rank tracks the covariance spectrum") {
  Rng rng(406);

  // isotropic rows: near-flat spectrum, effective rank near the dimension
  {
    const Index n = 500, dim = 6;
    Tensor<double> rows(Shape{n, dim});
    for (Index i = 0; i < rows.numel(); ++i) rows[i] = rng.normal();
    auto rep = expansion_diag(rows, rows, 1e-6);
    CHECK(rep.effective_rank_spike > 5.0);
    CHECK(rep.effective_rank_spike <= 6.0 + 1e-9);
    CHECK(rep.effective_rank_joint == rep.effective_rank_spike);
  }

  // rank-one rows: one dominant eigenvalue
  {
    const Index n = 200, dim = 6;
    std::vector<double> u(static_cast<std::size_t>(dim));
    for (auto& x : u) x = rng.normal();
    Tensor<double> rows(Shape{n, dim});
    for (Index i = 0; i < n; ++i) {
      const double a = rng.normal();
      for (Index j = 0; j < dim; ++j) rows(i, j) = a * u[static_cast<std::size_t>(j)];
    }
    auto rep = expansion_diag(rows, rows, 1e-6);
    CHECK(rep.effective_rank_spike < 1.5);
  }
}

TEST_CASE("expansion diagnostic validates its inputs") {
  Tensor<double> a(Shape{4, 3});
  Tensor<double> b(Shape{4, 4});
  for (Index i = 0; i < a.numel(); ++i) a[i] = static_cast<double>(i);
  for (Index i = 0; i < b.numel(); ++i) b[i] = static_cast<double>(i);
  CHECK(kind_of([&] { expansion_diag(a, b); }) == ErrorKind::dimension);
  CHECK(kind_of([&] {
          Tensor<double> flat(Shape{8});
          expansion_diag(flat, flat);
        }) == ErrorKind::dimension);
  CHECK(kind_of([&] {
          Tensor<double> one(Shape{1, 3});
          expansion_diag(one, one);
        }) == ErrorKind::contract);
  CHECK(kind_of([&] { expansion_diag(a, a, 0.0); }) == ErrorKind::validation);

  // fewer rows than dimensions: flagged but still computed
  Tensor<double> thin(Shape{4, 8});
  Rng rng(407);
  for (Index i = 0; i < thin.numel(); ++i) thin[i] = rng.normal();
  auto rep = expansion_diag(thin, thin, 1e-6);
  CHECK(rep.ill_conditioned);
  CHECK(std::isfinite(rep.logdet_spike));
  CHECK(std::isfinite(rep.effective_rank_spike));
}

TEST_CASE("expansion rows separate the context contribution per trial") {
  RunConfig cfg;
  cfg.dtype = "f64";
  cfg.seed = 13;
  cfg.embed_dim = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.window = 3;
  cfg.interval = 5;
  cfg.t_norm = 20;
  cfg.n_areas = 4;
  cfg.area_size = 8;
  cfg.d_text = 32;
  cfg.ffn_mult = 2;
  cfg.recon_hidden = 24;
  cfg.head_hidden = 24;

  CenterOutConfig g;
  g.n_trials = 4;
  g.n_units = 20;
  g.t_raw = 100;
  g.n_classes = 4;
  g.n_sources = 2;
  g.seed = 9;
  StubEmbedder emb(cfg.d_text);
  const auto trials = prepare_corpus<double>(gen_center_out(g), cfg, emb);
  const auto model = make_model<double>(cfg);

  const auto rows = collect_expansion_rows(trials, model.params, cfg);
  const Index per_trial = cfg.t_norm * cfg.n_areas;
  REQUIRE(rows.spike.shape() == Shape{4 * per_trial, cfg.embed_dim});
  REQUIRE(rows.joint.shape() == rows.spike.shape());

  // within one trial the joint-minus-spike offset is one constant vector
  auto offset_at = [&](Index r, Index j) { return rows.joint(r, j) - rows.spike(r, j); };
  for (Index block = 0; block < 4; ++block) {
    const Index r0 = block * per_trial;
    for (Index r = r0; r < r0 + per_trial; ++r)
      for (Index j = 0; j < cfg.embed_dim; ++j)
        CHECK(offset_at(r, j) == doctest::Approx(offset_at(r0, j)).epsilon(1e-12));
  }

  // trials 0 and 1 share a session (same offset); trial 2 does not
  double same = 0, diff = 0;
  for (Index j = 0; j < cfg.embed_dim; ++j) {
    same = std::max(same, std::abs(offset_at(0, j) - offset_at(per_trial, j)));
    diff = std::max(diff, std::abs(offset_at(0, j) - offset_at(2 * per_trial, j)));
  }
  CHECK(same < 1e-12);
  CHECK(diff > 1e-6);

  // end-to-end report on real rows: finite and well-formed
  auto rep = expansion_diag(rows.spike, rows.joint, 1e-6);
  CHECK(std::isfinite(rep.logdet_spike));
  CHECK(std::isfinite(rep.logdet_joint));
  CHECK(rep.n_samples == 4 * per_trial);

  const std::string csv = expansion_csv(rep);
  CHECK(csv.rfind("key,value\n", 0) == 0);
  CHECK(csv.find("logdet_spike,") != std::string::npos);
  CHECK(csv.find("logdet_joint,") != std::string::npos);
  CHECK(csv.find("effective_rank_spike,") != std::string::npos);
  CHECK(csv.find("effective_rank_joint,") != std::string::npos);
  CHECK(csv.find("eps,") != std::string::npos);
  CHECK(csv.find("n_samples,320\n") != std::string::npos);
  CHECK(csv.find("dim,16\n") != std::string::npos);
  CHECK(csv.find("ill_conditioned,0\n") != std::string::npos);
}
