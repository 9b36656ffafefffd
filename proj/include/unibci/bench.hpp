#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unibci/model.hpp"

namespace unibci {

// ---------------------------------------------------------------------------
// Attention micro-kernels used for complexity measurements. They are plain
// Eigen expressions of the same dataflow as the tape implementations (the
// tests pin the equivalence) so the measured scaling is the algorithm's, not
// the autograd machinery's. Everything here runs on one thread.
// ---------------------------------------------------------------------------

enum class BenchComponent { ila, full_attn, aswa, global_attn };

inline BenchComponent parse_component(const std::string& s) {
  if (s == "ila") return BenchComponent::ila;
  if (s == "full" || s == "full-attn" || s == "full_attn") return BenchComponent::full_attn;
  if (s == "aswa") return BenchComponent::aswa;
  if (s == "global" || s == "global-attn" || s == "global_attn") return BenchComponent::global_attn;
  fail(ErrorKind::validation, "bench: unknown component '" + s + "'");
}

inline std::string component_str(BenchComponent c) {
  switch (c) {
    case BenchComponent::ila: return "ila";
    case BenchComponent::full_attn: return "full_attn";
    case BenchComponent::aswa: return "aswa";
    case BenchComponent::global_attn: return "global_attn";
  }
  return "ila";
}

// Interval kernels use (n, a, t, d); sequence kernels use (s, w, d). Unused
// fields are zeroed in emitted rows so the CSV stays unambiguous.
struct BenchShape {
  Index n = 1, a = 1, t = 0, d = 0, s = 0, w = 0;
};

struct TimingRow {
  BenchComponent component = BenchComponent::ila;
  BenchShape shape;
  double wall_ns = 0;
  double flops = 0;
  int reps = 0;
  int warmups = 0;
};

// ---------------------------------------------------------------------------
// Analytic flop models: exact multiply-add counts (x2 for multiply plus add)
// of the projections and the attention products. Softmax normalization and
// additive bias terms are excluded; the models are verified against
// instrumented small-shape enumerations in the tests.
// ---------------------------------------------------------------------------

inline void require_positive(bool ok) {
  if (!ok) fail(ErrorKind::validation, "bench: extents must be positive");
}

// Per slice: three [t,d]x[d,d] projections (3td^2) plus K^T V ([d,t]x[t,d])
// and Q(K^T V) ([t,d]x[d,d]), each td^2. Linear in t.
inline double flops_ila(Index n, Index a, Index t, Index d) {
  require_positive(n >= 1 && a >= 1 && t >= 1 && d >= 1);
  const double td2 = static_cast<double>(t) * static_cast<double>(d) * static_cast<double>(d);
  return 2.0 * static_cast<double>(n) * static_cast<double>(a) * (3.0 * td2 + 2.0 * td2);
}

// Per slice: the same projections plus the [t,t] score matrix (t^2 d) and its
// product with V (t^2 d). Quadratic in t once t exceeds d.
inline double flops_full_attn(Index n, Index a, Index t, Index d) {
  require_positive(n >= 1 && a >= 1 && t >= 1 && d >= 1);
  const double td2 = static_cast<double>(t) * static_cast<double>(d) * static_cast<double>(d);
  const double t2d = static_cast<double>(t) * static_cast<double>(t) * static_cast<double>(d);
  return 2.0 * static_cast<double>(n) * static_cast<double>(a) * (3.0 * td2 + 2.0 * t2d);
}

// Sum over rows of the causal window length min(i+1, w).
inline double window_positions(Index s, Index w) {
  require_positive(s >= 1 && w >= 1);
  const double sd = static_cast<double>(s), wd = static_cast<double>(w);
  if (s <= w) return sd * (sd + 1.0) / 2.0;
  return wd * (wd + 1.0) / 2.0 + (sd - wd) * wd;
}

// Projections (3sd^2) plus per-row scoring and value mixing over the causal
// window (2 * window_positions * d). Linear in s at fixed w.
inline double flops_aswa(Index s, Index w, Index d) {
  require_positive(s >= 1 && w >= 1 && d >= 1);
  const double sd2 = static_cast<double>(s) * static_cast<double>(d) * static_cast<double>(d);
  return 2.0 * (3.0 * sd2 + 2.0 * window_positions(s, w) * static_cast<double>(d));
}

// Dense causal attention over the full sequence: the w >= s limit of aswa.
inline double flops_global_attn(Index s, Index d) {
  require_positive(s >= 1 && d >= 1);
  return flops_aswa(s, s, d);
}

// ---------------------------------------------------------------------------
// Kernels.
// ---------------------------------------------------------------------------

using Mat = Eigen::MatrixXd;

// Linear attention slice: Q (K^T V), never forming the [t,t] score matrix.
inline Mat ila_kernel(const Mat& h, const Mat& wq, const Mat& wk, const Mat& wv) {
  const Mat q = h * wq;
  const Mat k = h * wk;
  const Mat v = h * wv;
  return q * (k.transpose() * v);
}

// Dense softmax attention slice over all t positions.
inline Mat full_attn_kernel(const Mat& h, const Mat& wq, const Mat& wk, const Mat& wv) {
  const Mat q = h * wq;
  const Mat k = h * wk;
  const Mat v = h * wv;
  Mat scores = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp();
    scores.row(i) = e / e.sum();
  }
  return scores * v;
}

// Windowed causal softmax attention in O(s * w * d): each row only touches
// its window slab, so no [s,s] matrix ever exists.
inline Mat aswa_window_kernel(const Mat& q, const Mat& k, const Mat& v, Index w) {
  if (w < 1) fail(ErrorKind::validation, "bench: window must be >= 1");
  if (q.rows() != k.rows() || k.rows() != v.rows() || q.cols() != k.cols())
    fail(ErrorKind::dimension, "bench: q/k/v row counts must agree");
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat out(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - static_cast<Eigen::Index>(w) + 1);
    const Eigen::Index len = i - lo + 1;
    Eigen::VectorXd scores = k.middleRows(lo, len) * q.row(i).transpose() * inv_scale;
    const double mx = scores.maxCoeff();
    Eigen::VectorXd e = (scores.array() - mx).exp();
    e /= e.sum();
    out.row(i) = e.transpose() * v.middleRows(lo, len);
  }
  return out;
}

// Dense causal softmax attention, O(s^2 * d); reference point for aswa.
inline Mat global_causal_kernel(const Mat& q, const Mat& k, const Mat& v) {
  if (q.rows() != k.rows() || k.rows() != v.rows() || q.cols() != k.cols())
    fail(ErrorKind::dimension, "bench: q/k/v row counts must agree");
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat scores = (q * k.transpose()) * inv_scale;
  Mat out(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index len = i + 1;
    Eigen::RowVectorXd row = scores.row(i).head(len);
    const double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp();
    e /= e.sum();
    out.row(i) = e * v.topRows(len);
  }
  return out;
}

// Seeded operands; rows is t for interval kernels, s for sequence kernels.
struct KernelInputs {
  Mat h, wq, wk, wv;
};

inline KernelInputs make_kernel_inputs(Index rows, Index d, std::uint64_t seed) {
  require_positive(rows >= 1 && d >= 1);
  KernelInputs in;
  in.h = Mat(rows, d);
  in.wq = Mat(d, d);
  in.wk = Mat(d, d);
  in.wv = Mat(d, d);
  Rng rng(seed);
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < in.h.size(); ++i) in.h.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < in.wq.size(); ++i) in.wq.data()[i] = rng.normal() * ws;
  for (Eigen::Index i = 0; i < in.wk.size(); ++i) in.wk.data()[i] = rng.normal() * ws;
  for (Eigen::Index i = 0; i < in.wv.size(); ++i) in.wv.data()[i] = rng.normal() * ws;
  return in;
}

// ---------------------------------------------------------------------------
// Timing harness: median of `reps` wall-clock samples after `warmups` unclocked
// runs. The kernel's checksum is accumulated and returned so the optimizer
// cannot drop the work.
// ---------------------------------------------------------------------------

template <typename F>
double median_wall_ns(F&& fn, int reps, int warmups, double* checksum = nullptr) {
  if (reps < 1 || warmups < 0) fail(ErrorKind::validation, "bench: bad reps/warmups");
  double acc = 0;
  for (int i = 0; i < warmups; ++i) acc += fn();
  std::vector<double> samples(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    acc += fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples[static_cast<std::size_t>(i)] =
        static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  const double median = (samples.size() % 2 == 1)
                            ? samples[mid]
                            : 0.5 * (samples[mid - 1] + samples[mid]);
  if (checksum) *checksum = acc;
  return median;
}

inline TimingRow measure_component(BenchComponent comp, BenchShape shape, int reps = 31,
                                   int warmups = 5, std::uint64_t seed = 12345) {
  TimingRow row;
  row.component = comp;
  row.reps = reps;
  row.warmups = warmups;
  switch (comp) {
    case BenchComponent::ila:
    case BenchComponent::full_attn: {
      require_positive(shape.n >= 1 && shape.a >= 1 && shape.t >= 1 && shape.d >= 1);
      shape.s = 0;
      shape.w = 0;
      const KernelInputs in = make_kernel_inputs(shape.t, shape.d, seed);
      const Index slices = shape.n * shape.a;
      auto fn = [&]() {
        double acc = 0;
        for (Index k = 0; k < slices; ++k)
          acc += (comp == BenchComponent::ila ? ila_kernel(in.h, in.wq, in.wk, in.wv)
                                              : full_attn_kernel(in.h, in.wq, in.wk, in.wv))
                     .sum();
        return acc;
      };
      row.wall_ns = median_wall_ns(fn, reps, warmups);
      row.flops = comp == BenchComponent::ila ? flops_ila(shape.n, shape.a, shape.t, shape.d)
                                              : flops_full_attn(shape.n, shape.a, shape.t, shape.d);
      break;
    }
    case BenchComponent::aswa: {
      require_positive(shape.s >= 1 && shape.w >= 1 && shape.d >= 1);
      shape.n = 0;
      shape.a = 0;
      shape.t = 0;
      const KernelInputs in = make_kernel_inputs(shape.s, shape.d, seed);
      auto fn = [&]() {
        const Mat q = in.h * in.wq;
        const Mat k = in.h * in.wk;
        const Mat v = in.h * in.wv;
        return aswa_window_kernel(q, k, v, shape.w).sum();
      };
      row.wall_ns = median_wall_ns(fn, reps, warmups);
      row.flops = flops_aswa(shape.s, shape.w, shape.d);
      break;
    }
    case BenchComponent::global_attn: {
      require_positive(shape.s >= 1 && shape.d >= 1);
      shape.n = 0;
      shape.a = 0;
      shape.t = 0;
      shape.w = 0;
      const KernelInputs in = make_kernel_inputs(shape.s, shape.d, seed);
      auto fn = [&]() {
        const Mat q = in.h * in.wq;
        const Mat k = in.h * in.wk;
        const Mat v = in.h * in.wv;
        return global_causal_kernel(q, k, v).sum();
      };
      row.wall_ns = median_wall_ns(fn, reps, warmups);
      row.flops = flops_global_attn(shape.s, shape.d);
      break;
    }
  }
  row.shape = shape;
  return row;
}

// ---------------------------------------------------------------------------
// Sweeps and slope fits.
// ---------------------------------------------------------------------------

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::dimension, "slope: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::contract, "slope: need at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) fail(ErrorKind::validation, "slope: values must be positive");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (denom == 0) fail(ErrorKind::degenerate, "slope: swept values are all equal");
  return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

// Swept axis per component: t for the interval kernels, s for the sequence
// kernels.
inline bool sweeps_t(BenchComponent c) {
  return c == BenchComponent::ila || c == BenchComponent::full_attn;
}

struct SweepResult {
  std::vector<TimingRow> rows;
  double slope = 0;
  int inversions = 0;  // monotonicity violations remaining after one re-measure
};

inline SweepResult bench_sweep(BenchComponent comp, BenchShape base,
                               const std::vector<Index>& values, int reps = 31, int warmups = 5) {
  if (values.size() < 2) fail(ErrorKind::validation, "bench: sweep needs >= 2 points");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 1) fail(ErrorKind::validation, "bench: swept values must be >= 1");
    if (i > 0 && values[i] <= values[i - 1])
      fail(ErrorKind::validation, "bench: swept values must be strictly increasing");
  }
  auto at = [&](Index v) {
    BenchShape s = base;
    (sweeps_t(comp) ? s.t : s.s) = v;
    return measure_component(comp, s, reps, warmups, mix64(9000, static_cast<std::uint64_t>(v)));
  };

  SweepResult out;
  out.rows.reserve(values.size());
  for (Index v : values) out.rows.push_back(at(v));

  // timing medians should grow along the axis; re-measure once on a violation
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].wall_ns < out.rows[i - 1].wall_ns) {
      out.rows[i - 1] = at(values[i - 1]);
      out.rows[i] = at(values[i]);
    }
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].wall_ns < out.rows[i - 1].wall_ns) ++out.inversions;

  std::vector<double> xs, ys;
  xs.reserve(values.size());
  ys.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    xs.push_back(static_cast<double>(values[i]));
    ys.push_back(out.rows[i].wall_ns);
  }
  out.slope = fit_loglog_slope(xs, ys);
  return out;
}

// Default grids: the interval sweep extends t well past d for the dense
// kernel so its quadratic term dominates the fit.
inline std::vector<Index> default_sweep_values(BenchComponent c) {
  switch (c) {
    case BenchComponent::ila: return {8, 16, 32, 64, 128};
    case BenchComponent::full_attn: return {32, 64, 128, 256, 512};
    case BenchComponent::aswa: return {64, 128, 256, 512, 1024};
    case BenchComponent::global_attn: return {64, 128, 256, 512};
  }
  return {8, 16, 32};
}

inline BenchShape default_sweep_base(BenchComponent c) {
  BenchShape s;
  switch (c) {
    case BenchComponent::ila:
      s.n = 2;
      s.a = 4;
      s.d = 64;
      break;
    case BenchComponent::full_attn:
      s.n = 1;
      s.a = 1;
      s.d = 16;
      break;
    case BenchComponent::aswa:
      s.d = 64;
      s.w = 10;
      break;
    case BenchComponent::global_attn:
      s.d = 64;
      break;
  }
  return s;
}

inline std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::string out = "component,N,A,t,d,S,w,wall_ns,flops\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%lld,%lld,%lld,%lld,%.17g,%.17g\n",
                  component_str(r.component).c_str(), static_cast<long long>(r.shape.n),
                  static_cast<long long>(r.shape.a), static_cast<long long>(r.shape.t),
                  static_cast<long long>(r.shape.d), static_cast<long long>(r.shape.s),
                  static_cast<long long>(r.shape.w), r.wall_ns, r.flops);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding-space expansion diagnostic: compares the covariance spectrum of
// spike-only channel embeddings against the same rows after the projected
// context vector is added. Positional tables are identical across trials and
// excluded, so any spectral growth is attributable to the metadata injection.
// ---------------------------------------------------------------------------

struct ExpansionReport {
  double logdet_spike = 0;
  double logdet_joint = 0;
  double effective_rank_spike = 0;
  double effective_rank_joint = 0;
  double eps = 1e-6;
  Index n_samples = 0;
  Index dim = 0;
  bool ill_conditioned = false;  // fewer samples than dimensions
};

// First-order bound on |logdet(A + E) - logdet(A)| when every eigenvalue of A
// is >= eps and E is rounding-level noise: rows of O(1) data give covariance
// entries reproducible to ~1e-15, so ||E||_2 <= dim * 1e-15 and the logdet
// moves by at most dim * ||E||_2 / eps. A factor-10 cushion is included.
inline double expansion_shift_bound(Index dim, double eps) {
  return static_cast<double>(dim) * static_cast<double>(dim) * 1e-14 / eps;
}

inline Eigen::MatrixXd sample_covariance(const Tensor<double>& rows) {
  const Index n = rows.extent(0), d = rows.extent(1);
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rows(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  return (x.transpose() * x) / static_cast<double>(n - 1);
}

inline ExpansionReport expansion_diag(const Tensor<double>& spike_rows,
                                      const Tensor<double>& joint_rows, double eps = 1e-6) {
  if (spike_rows.rank() != 2 || joint_rows.rank() != 2)
    fail(ErrorKind::dimension, "expansion: row matrices must be [n, dim]");
  if (!(spike_rows.shape() == joint_rows.shape()))
    fail(ErrorKind::dimension, "expansion: spike and joint sample shapes differ");
  if (!(eps > 0)) fail(ErrorKind::validation, "expansion: eps must be > 0");
  const Index n = spike_rows.extent(0), d = spike_rows.extent(1);
  if (n < 2) fail(ErrorKind::contract, "expansion: need at least 2 sample rows");
  if (d < 1) fail(ErrorKind::dimension, "expansion: dim must be >= 1");

  ExpansionReport rep;
  rep.eps = eps;
  rep.n_samples = n;
  rep.dim = d;
  rep.ill_conditioned = n < d;

  auto stats = [&](const Tensor<double>& rows, double& logdet, double& eff_rank) {
    Eigen::MatrixXd cov = sample_covariance(rows);
    cov.diagonal().array() += eps;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
      fail(ErrorKind::degenerate, "expansion: eigendecomposition failed");
    const Eigen::VectorXd lam = es.eigenvalues();
    double ld = 0, total = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      if (!(lam[i] > 0))
        fail(ErrorKind::degenerate, "expansion: nonpositive eigenvalue after regularization");
      ld += std::log(lam[i]);
      total += lam[i];
    }
    double entropy = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const double p = lam[i] / total;
      entropy -= p * std::log(p);
    }
    logdet = ld;
    eff_rank = std::exp(entropy);
  };
  stats(spike_rows, rep.logdet_spike, rep.effective_rank_spike);
  stats(joint_rows, rep.logdet_joint, rep.effective_rank_joint);
  return rep;
}

// Row sample for the diagnostic: one row per (time, area) position per trial;
// spike rows are the shared-weight channel embeddings, joint rows add the
// trial's projected context vector.
struct ExpansionRows {
  Tensor<double> spike;
  Tensor<double> joint;
};

template <typename S>
ExpansionRows collect_expansion_rows(const std::vector<PreparedTrial<S>>& trials,
                                     const ParamStore<S>& params, const RunConfig& cfg) {
  if (trials.empty()) fail(ErrorKind::validation, "expansion: empty trial list");
  const Index d = cfg.embed_dim;
  const Index per_trial = cfg.t_norm * cfg.n_areas;
  const Index n = static_cast<Index>(trials.size()) * per_trial;
  ExpansionRows out{Tensor<double>(Shape{n, d}), Tensor<double>(Shape{n, d})};
  Index r = 0;
  for (const auto& trial : trials) {
    Tape<S> tape;
    auto bp = BoundParams<S>::bind(tape, params);
    const TokenizerVars tv = bind_tokenizer(bp);
    Var x_emb = embed_channels(tape, trial.norm, tv.w_e, tv.b_e);  // [A,T,d]
    Var mp = tape.reshape(
        tape.matmul(tape.reshape(tape.constant(trial.meta), Shape{1, cfg.d_text}), tv.w_proj),
        Shape{d});
    const Tensor<S>& xe = tape.val(x_emb);
    const Tensor<S>& m = tape.val(mp);
    for (Index a = 0; a < cfg.n_areas; ++a)
      for (Index t = 0; t < cfg.t_norm; ++t, ++r)
        for (Index j = 0; j < d; ++j) {
          const double e = static_cast<double>(xe(a, t, j));
          out.spike(r, j) = e;
          out.joint(r, j) = e + static_cast<double>(m[j]);
        }
  }
  return out;
}

inline std::string expansion_csv(const ExpansionReport& rep) {
  std::string out = "key,value\n";
  char buf[96];
  auto add = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g\n", key, v);
    out += buf;
  };
  add("logdet_spike", rep.logdet_spike);
  add("logdet_joint", rep.logdet_joint);
  add("effective_rank_spike", rep.effective_rank_spike);
  add("effective_rank_joint", rep.effective_rank_joint);
  add("eps", rep.eps);
  out += "n_samples," + std::to_string(rep.n_samples) + "\n";
  out += "dim," + std::to_string(rep.dim) + "\n";
  out += std::string("ill_conditioned,") + (rep.ill_conditioned ? "1" : "0") + "\n";
  return out;
}

}  // namespace unibci
