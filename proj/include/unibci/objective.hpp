#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "unibci/params.hpp"
#include "unibci/rng.hpp"
#include "unibci/tape.hpp"

namespace unibci {

// Token-level mask over the J = N*A*t tokens of one trial, in the row-major
// order of [N, A, t]. flags[j] == 1 means token j is masked (zeroed on the
// input side, scored on the loss side).
struct MaskPlan {
  std::vector<std::uint8_t> flags;
  double ratio = 0.0;
  std::uint64_t seed = 0;

  Index count() const {
    Index n = 0;
    for (std::uint8_t f : flags) n += f;
    return n;
  }
};

// Exact-count sampling: a seeded permutation of the J token slots, the first
// floor(ratio*J) of which are masked.
inline MaskPlan sample_mask(Index j, double ratio, std::uint64_t seed) {
  if (j < 1) fail(ErrorKind::validation, "mask: token count must be >= 1");
  if (ratio < 0.0 || ratio > 1.0) fail(ErrorKind::validation, "mask: ratio must be in [0,1]");
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.flags.assign(static_cast<std::size_t>(j), 0);
  const Index n_masked = static_cast<Index>(std::floor(ratio * static_cast<double>(j)));
  Rng rng(seed);
  const std::vector<Index> perm = rng.permutation(j);
  for (Index i = 0; i < n_masked; ++i) plan.flags[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
  return plan;
}

// 0/1 tensor of the full token shape, broadcasting the token-level flags over
// the feature axis. ones_at_masked selects which side gets the ones.
template <typename S>
Tensor<S> mask_tensor(const MaskPlan& plan, const Shape& token_shape, bool ones_at_masked) {
  if (token_shape.rank() != 4) fail(ErrorKind::dimension, "mask: token tensor must be [N,A,t,d]");
  const Index j_total = token_shape.extent(0) * token_shape.extent(1) * token_shape.extent(2);
  if (j_total != static_cast<Index>(plan.flags.size()))
    fail(ErrorKind::length, "mask: plan has " + std::to_string(plan.flags.size()) +
                                " flags for " + std::to_string(j_total) + " tokens");
  const Index d = token_shape.extent(3);
  Tensor<S> m(token_shape);
  for (Index j = 0; j < j_total; ++j) {
    const bool masked = plan.flags[static_cast<std::size_t>(j)] != 0;
    const S value = (masked == ones_at_masked) ? S(1) : S(0);
    for (Index x = 0; x < d; ++x) m[j * d + x] = value;
  }
  return m;
}

// Masked tokens are set to exactly zero; the rest pass through untouched.
template <typename S>
Var apply_mask(Tape<S>& tape, Var tokens, const MaskPlan& plan) {
  Var keep = tape.constant(mask_tensor<S>(plan, tape.val(tokens).shape(), false));
  return tape.mul(tokens, keep);
}

// Mean over masked tokens of the squared L2 distance between prediction and
// target. Unmasked positions contribute nothing, in value or gradient.
template <typename S>
Var masked_l2_loss(Tape<S>& tape, Var pred, Var target, const MaskPlan& plan) {
  if (!(tape.val(pred).shape() == tape.val(target).shape()))
    fail(ErrorKind::dimension, "masked loss: prediction and target shapes differ");
  const Index n_masked = plan.count();
  if (n_masked == 0) fail(ErrorKind::contract, "masked loss: zero masked tokens");
  Var diff = tape.sub(pred, target);
  Var sq = tape.mul(diff, diff);
  Var scored = tape.mul(sq, tape.constant(mask_tensor<S>(plan, tape.val(pred).shape(), true)));
  return tape.scale(tape.reduce_sum(scored), S(1.0 / static_cast<double>(n_masked)));
}

// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / total)) / 2
inline double cosine_lr(Index epoch, Index total, double lr_max, double lr_min) {
  if (total < 1 || epoch < 0 || epoch > total)
    fail(ErrorKind::validation, "cosine_lr: need 0 <= epoch <= total");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename S>
struct OptimState {
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  std::int64_t step = 0;

  static OptimState like(const ParamStore<S>& params) {
    OptimState st;
    st.m.reserve(static_cast<std::size_t>(params.size()));
    st.v.reserve(static_cast<std::size_t>(params.size()));
    for (Index i = 0; i < params.size(); ++i) {
      st.m.push_back(Tensor<S>::zeros(params.value(i).shape()));
      st.v.push_back(Tensor<S>::zeros(params.value(i).shape()));
    }
    return st;
  }
};

// Decoupled weight decay: p <- p - lr * (mhat / (sqrt(vhat) + eps) + wd * p).
// Plain elementwise loops in registration order keep the update bitwise
// reproducible.
template <typename S>
void adamw_step(ParamStore<S>& params, const std::vector<Tensor<S>>& grads, OptimState<S>& st,
                const AdamWConfig& cfg) {
  if (static_cast<Index>(grads.size()) != params.size() ||
      static_cast<Index>(st.m.size()) != params.size())
    fail(ErrorKind::contract, "adamw: grads/state do not mirror params");
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (Index i = 0; i < params.size(); ++i) {
    Tensor<S>& p = params.value(i);
    const Tensor<S>& g = grads[static_cast<std::size_t>(i)];
    if (!(g.shape() == p.shape())) fail(ErrorKind::dimension, "adamw: grad shape mismatch");
    Tensor<S>& m = st.m[static_cast<std::size_t>(i)];
    Tensor<S>& v = st.v[static_cast<std::size_t>(i)];
    for (Index x = 0; x < p.numel(); ++x) {
      const double gx = static_cast<double>(g[x]);
      const double mx = cfg.beta1 * static_cast<double>(m[x]) + (1.0 - cfg.beta1) * gx;
      const double vx = cfg.beta2 * static_cast<double>(v[x]) + (1.0 - cfg.beta2) * gx * gx;
      m[x] = static_cast<S>(mx);
      v[x] = static_cast<S>(vx);
      const double mhat = mx / bc1;
      const double vhat = vx / bc2;
      const double px = static_cast<double>(p[x]);
      p[x] = static_cast<S>(px - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                           cfg.weight_decay * px));
    }
  }
}

template <typename S>
double global_grad_norm(const std::vector<Tensor<S>>& grads) {
  double acc = 0;
  for (const auto& g : grads)
    for (Index x = 0; x < g.numel(); ++x) acc += static_cast<double>(g[x]) * static_cast<double>(g[x]);
  return std::sqrt(acc);
}

// Global-norm clipping; no-op when the norm is within bounds.
template <typename S>
void clip_grads(std::vector<Tensor<S>>& grads, double max_norm) {
  if (max_norm <= 0) fail(ErrorKind::validation, "clip: max_norm must be > 0");
  const double norm = global_grad_norm(grads);
  if (norm <= max_norm) return;
  const S factor = static_cast<S>(max_norm / norm);
  for (auto& g : grads)
    for (Index x = 0; x < g.numel(); ++x) g[x] *= factor;
}

}  // namespace unibci
