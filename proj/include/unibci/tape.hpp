#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "unibci/rng.hpp"
#include "unibci/tensor.hpp"

namespace unibci {

// Handle into a Tape's value list.
struct Var {
  Index id = -1;
};

// Reverse-mode tape: an ordered op record (Wengert list). Each primitive
// appends exactly one fresh output value; backward replays the records in
// exact reverse creation order, accumulating adjoints with +=. Gradients are
// allocated lazily, so subgraphs the loss never touched cost nothing and read
// back as zeros.
template <typename S>
class Tape {
 public:
  struct Op {
    const char* name;
    Index out;
    std::function<void(Tape&)> backward;
  };

  Var leaf(Tensor<S> v) { return push(std::move(v)); }
  // A constant is a leaf whose gradient nobody reads.
  Var constant(Tensor<S> v) { return push(std::move(v)); }

  const Tensor<S>& val(Var v) const { return values_[static_cast<std::size_t>(v.id)]; }
  Index size() const { return static_cast<Index>(values_.size()); }
  const std::vector<Op>& ops() const { return ops_; }

  // Zero-filled if the loss never reached this var.
  Tensor<S> grad(Var v) const {
    const auto& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.defined()) return g;
    return Tensor<S>::zeros(val(v).shape());
  }
  bool grad_defined(Var v) const { return grads_[static_cast<std::size_t>(v.id)].defined(); }

  // ---- primitives ----------------------------------------------------------

  Var matmul(Var a, Var b) {
    Var o = push(unibci::matmul(val(a), val(b)));
    record("matmul", o, [a, b, o](Tape& t) {
      const Tensor<S>& g = t.grad_of(o);
      const Tensor<S>& A = t.val(a);
      const Tensor<S>& B = t.val(b);
      Tensor<S> da(A.shape());
      da.mat().noalias() = g.mat() * B.mat().transpose();
      t.accum(a, std::move(da));
      Tensor<S> db(B.shape());
      db.mat().noalias() = A.mat().transpose() * g.mat();
      t.accum(b, std::move(db));
    });
    return o;
  }

  Var bmm(Var a, Var b, bool ta = false, bool tb = false) {
    Var o = push(unibci::bmm(val(a), val(b), ta, tb));
    record("bmm", o, [a, b, o, ta, tb](Tape& t) {
      const Tensor<S>& g = t.grad_of(o);
      const Tensor<S>& A = t.val(a);
      const Tensor<S>& B = t.val(b);
      if (!ta && !tb) {
        t.accum(a, unibci::bmm(g, B, false, true));
        t.accum(b, unibci::bmm(A, g, true, false));
      } else if (ta) {  // C = A^T B
        t.accum(a, unibci::bmm(B, g, false, true));
        t.accum(b, unibci::bmm(A, g, false, false));
      } else {  // C = A B^T
        t.accum(a, unibci::bmm(g, B, false, false));
        t.accum(b, unibci::bmm(g, A, true, false));
      }
    });
    return o;
  }

  Var add(Var a, Var b) {
    check_same(val(a).shape(), val(b).shape(), "add");
    Tensor<S> out(val(a).shape());
    out.array() = val(a).array() + val(b).array();
    Var o = push(std::move(out));
    record("add", o, [a, b, o](Tape& t) {
      t.accum(a, t.grad_of(o));
      t.accum(b, t.grad_of(o));
    });
    return o;
  }

  Var sub(Var a, Var b) {
    check_same(val(a).shape(), val(b).shape(), "sub");
    Tensor<S> out(val(a).shape());
    out.array() = val(a).array() - val(b).array();
    Var o = push(std::move(out));
    record("sub", o, [a, b, o](Tape& t) {
      t.accum(a, t.grad_of(o));
      Tensor<S> nb(t.val(b).shape());
      nb.array() = -t.grad_of(o).array();
      t.accum(b, std::move(nb));
    });
    return o;
  }

  Var mul(Var a, Var b) {
    check_same(val(a).shape(), val(b).shape(), "mul");
    Tensor<S> out(val(a).shape());
    out.array() = val(a).array() * val(b).array();
    Var o = push(std::move(out));
    record("mul", o, [a, b, o](Tape& t) {
      Tensor<S> da(t.val(a).shape());
      da.array() = t.grad_of(o).array() * t.val(b).array();
      t.accum(a, std::move(da));
      Tensor<S> db(t.val(b).shape());
      db.array() = t.grad_of(o).array() * t.val(a).array();
      t.accum(b, std::move(db));
    });
    return o;
  }

  Var scale(Var a, S c) {
    Tensor<S> out(val(a).shape());
    out.array() = val(a).array() * c;
    Var o = push(std::move(out));
    record("scale", o, [a, o, c](Tape& t) {
      Tensor<S> da(t.val(a).shape());
      da.array() = t.grad_of(o).array() * c;
      t.accum(a, std::move(da));
    });
    return o;
  }

  // b's shape must be a trailing suffix of x's shape; b is added to every
  // leading slice.
  Var add_broadcast(Var x, Var b) {
    const Shape& xs = val(x).shape();
    const Shape& bs = val(b).shape();
    if (bs.rank() > xs.rank()) fail(ErrorKind::dimension, "add_broadcast: rank");
    for (int i = 0; i < bs.rank(); ++i)
      if (bs.extent(i) != xs.extent(xs.rank() - bs.rank() + i))
        fail(ErrorKind::dimension, "add_broadcast: " + bs.str() + " is not a suffix of " + xs.str());
    const Index inner = bs.numel();
    const Index outer = xs.numel() / inner;
    Tensor<S> out = val(x);
    out.mat(outer, inner).rowwise() += val(b).mat(1, inner).row(0);
    Var o = push(std::move(out));
    record("add_broadcast", o, [x, b, o, outer, inner](Tape& t) {
      t.accum(x, t.grad_of(o));
      Tensor<S> db(t.val(b).shape());
      db.mat(1, inner).row(0) = t.grad_of(o).mat(outer, inner).colwise().sum();
      t.accum(b, std::move(db));
    });
    return o;
  }

  // Expands a singleton axis to n copies.
  Var repeat_axis(Var x, int axis, Index n) {
    const Shape& xs = val(x).shape();
    if (axis < 0 || axis >= xs.rank() || xs.extent(axis) != 1)
      fail(ErrorKind::dimension, "repeat_axis: axis must index a singleton extent");
    Index pre = 1, post = 1;
    for (int i = 0; i < axis; ++i) pre *= xs.extent(i);
    for (int i = axis + 1; i < xs.rank(); ++i) post *= xs.extent(i);
    std::vector<Index> oext;
    for (int i = 0; i < xs.rank(); ++i) oext.push_back(i == axis ? n : xs.extent(i));
    Tensor<S> out{Shape(oext)};
    for (Index p = 0; p < pre; ++p)
      for (Index k = 0; k < n; ++k)
        for (Index q = 0; q < post; ++q) out[(p * n + k) * post + q] = val(x)[p * post + q];
    Var o = push(std::move(out));
    record("repeat_axis", o, [x, o, pre, post, n](Tape& t) {
      Tensor<S> dx(t.val(x).shape());
      const Tensor<S>& g = t.grad_of(o);
      for (Index p = 0; p < pre; ++p)
        for (Index q = 0; q < post; ++q) {
          S acc = 0;
          for (Index k = 0; k < n; ++k) acc += g[(p * n + k) * post + q];
          dx[p * post + q] = acc;
        }
      t.accum(x, std::move(dx));
    });
    return o;
  }

  Var transpose(Var x, std::vector<int> perm) {
    Var o = push(unibci::transpose(val(x), perm));
    record("transpose", o, [x, o, perm = std::move(perm)](Tape& t) {
      t.accum(x, unibci::transpose(t.grad_of(o), inverse_perm(perm)));
    });
    return o;
  }

  Var reshape(Var x, Shape s) {
    Var o = push(val(x).reshaped(s));
    record("reshape", o, [x, o](Tape& t) {
      t.accum(x, t.grad_of(o).reshaped(t.val(x).shape()));
    });
    return o;
  }

  Var softmax_lastaxis(Var x) {
    Var o = push(unibci::softmax_lastaxis(val(x)));
    record("softmax", o, [x, o](Tape& t) {
      const Tensor<S>& y = t.val(o);
      const Tensor<S>& g = t.grad_of(o);
      const Index d = y.extent(y.rank() - 1);
      const Index rows = y.numel() / d;
      Tensor<S> dx(y.shape());
      for (Index r = 0; r < rows; ++r) {
        const S* yr = y.data() + r * d;
        const S* gr = g.data() + r * d;
        S* dr = dx.data() + r * d;
        S dot = 0;
        for (Index j = 0; j < d; ++j) dot += yr[j] * gr[j];
        for (Index j = 0; j < d; ++j) dr[j] = yr[j] * (gr[j] - dot);
      }
      t.accum(x, std::move(dx));
    });
    return o;
  }

  Var layernorm(Var x, Var gamma, Var beta, S eps = S(1e-5)) {
    Var o = push(unibci::layernorm(val(x), val(gamma), val(beta), eps));
    record("layernorm", o, [x, gamma, beta, o, eps](Tape& t) {
      const Tensor<S>& X = t.val(x);
      const Tensor<S>& G = t.val(gamma);
      const Tensor<S>& g = t.grad_of(o);
      const Index d = X.extent(X.rank() - 1);
      const Index rows = X.numel() / d;
      Tensor<S> dx(X.shape());
      Tensor<S> dgamma(G.shape());
      Tensor<S> dbeta(G.shape());
      for (Index r = 0; r < rows; ++r) {
        const S* in = X.data() + r * d;
        const S* gr = g.data() + r * d;
        S* dr = dx.data() + r * d;
        S mu = 0;
        for (Index j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<S>(d);
        S var = 0;
        for (Index j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<S>(d);
        const S inv = S(1) / std::sqrt(var + eps);
        S m1 = 0, m2 = 0;  // mean(dxhat), mean(dxhat * xhat)
        for (Index j = 0; j < d; ++j) {
          const S xh = (in[j] - mu) * inv;
          const S dxh = gr[j] * G[j];
          m1 += dxh;
          m2 += dxh * xh;
          dgamma[j] += gr[j] * xh;
          dbeta[j] += gr[j];
        }
        m1 /= static_cast<S>(d);
        m2 /= static_cast<S>(d);
        for (Index j = 0; j < d; ++j) {
          const S xh = (in[j] - mu) * inv;
          dr[j] = inv * (gr[j] * G[j] - m1 - xh * m2);
        }
      }
      t.accum(x, std::move(dx));
      t.accum(gamma, std::move(dgamma));
      t.accum(beta, std::move(dbeta));
    });
    return o;
  }

  Var avgpool_axis(Var x, int axis) {
    Var o = push(unibci::avgpool_axis(val(x), axis));
    const Shape& xs = val(x).shape();
    Index pre = 1, post = 1;
    const Index n = xs.extent(axis);
    for (int i = 0; i < axis; ++i) pre *= xs.extent(i);
    for (int i = axis + 1; i < xs.rank(); ++i) post *= xs.extent(i);
    record("avgpool", o, [x, o, pre, post, n](Tape& t) {
      Tensor<S> dx(t.val(x).shape());
      const Tensor<S>& g = t.grad_of(o);
      const S inv = S(1) / static_cast<S>(n);
      for (Index p = 0; p < pre; ++p)
        for (Index k = 0; k < n; ++k)
          for (Index q = 0; q < post; ++q)
            dx[(p * n + k) * post + q] = g[p * post + q] * inv;
      t.accum(x, std::move(dx));
    });
    return o;
  }

  Var gelu(Var x) {
    Var o = push(unibci::gelu(val(x)));
    record("gelu", o, [x, o](Tape& t) {
      const Tensor<S>& X = t.val(x);
      Tensor<S> dx(X.shape());
      const Tensor<S>& g = t.grad_of(o);
      for (Index i = 0; i < X.numel(); ++i) dx[i] = g[i] * gelu_grad_scalar(X[i]);
      t.accum(x, std::move(dx));
    });
    return o;
  }

  Var reduce_sum(Var x) {
    Tensor<S> out(Shape{1});
    S acc = 0;
    for (Index i = 0; i < val(x).numel(); ++i) acc += val(x)[i];
    out[0] = acc;
    Var o = push(std::move(out));
    record("reduce_sum", o, [x, o](Tape& t) {
      t.accum(x, Tensor<S>::full(t.val(x).shape(), t.grad_of(o)[0]));
    });
    return o;
  }

  // mask[i] != 0 replaces the entry with `fill`; gradient is blocked there.
  Var masked_fill(Var x, std::shared_ptr<const std::vector<std::uint8_t>> mask, S fill) {
    if (static_cast<Index>(mask->size()) != val(x).numel())
      fail(ErrorKind::dimension, "masked_fill: mask length mismatch");
    Tensor<S> out = val(x);
    for (Index i = 0; i < out.numel(); ++i)
      if ((*mask)[static_cast<std::size_t>(i)]) out[i] = fill;
    Var o = push(std::move(out));
    record("masked_fill", o, [x, o, mask](Tape& t) {
      Tensor<S> dx = t.grad_of(o);
      for (Index i = 0; i < dx.numel(); ++i)
        if ((*mask)[static_cast<std::size_t>(i)]) dx[i] = 0;
      t.accum(x, std::move(dx));
    });
    return o;
  }

  // Inverted dropout with an explicit seed; identity when not training.
  Var dropout(Var x, double p, std::uint64_t seed, bool training) {
    if (!training || p == 0.0) return x;
    if (p < 0.0 || p >= 1.0) fail(ErrorKind::contract, "dropout: p must be in [0,1)");
    auto mask = std::make_shared<std::vector<S>>(static_cast<std::size_t>(val(x).numel()));
    Rng rng(seed);
    const S keep_scale = S(1.0 / (1.0 - p));
    for (auto& m : *mask) m = (rng.uniform() >= p) ? keep_scale : S(0);
    Tensor<S> out(val(x).shape());
    for (Index i = 0; i < out.numel(); ++i) out[i] = val(x)[i] * (*mask)[static_cast<std::size_t>(i)];
    Var o = push(std::move(out));
    record("dropout", o, [x, o, mask](Tape& t) {
      Tensor<S> dx(t.val(x).shape());
      const Tensor<S>& g = t.grad_of(o);
      for (Index i = 0; i < dx.numel(); ++i) dx[i] = g[i] * (*mask)[static_cast<std::size_t>(i)];
      t.accum(x, std::move(dx));
    });
    return o;
  }

  Var concat_lastaxis(const std::vector<Var>& parts) {
    if (parts.empty()) fail(ErrorKind::contract, "concat: no parts");
    const Shape& s0 = val(parts[0]).shape();
    const int r = s0.rank();
    Index total_last = 0;
    for (Var p : parts) {
      const Shape& s = val(p).shape();
      if (s.rank() != r) fail(ErrorKind::dimension, "concat: rank mismatch");
      for (int i = 0; i + 1 < r; ++i)
        if (s.extent(i) != s0.extent(i)) fail(ErrorKind::dimension, "concat: leading extent mismatch");
      total_last += s.extent(r - 1);
    }
    std::vector<Index> oext;
    for (int i = 0; i + 1 < r; ++i) oext.push_back(s0.extent(i));
    oext.push_back(total_last);
    Tensor<S> out{Shape(oext)};
    const Index rows = out.numel() / total_last;
    Index off = 0;
    for (Var p : parts) {
      const Index dlast = val(p).extent(r - 1);
      for (Index row = 0; row < rows; ++row)
        for (Index j = 0; j < dlast; ++j)
          out[row * total_last + off + j] = val(p)[row * dlast + j];
      off += dlast;
    }
    Var o = push(std::move(out));
    record("concat", o, [parts, o, rows, total_last](Tape& t) {
      const Tensor<S>& g = t.grad_of(o);
      Index off2 = 0;
      for (Var p : parts) {
        const Index dlast = t.val(p).extent(t.val(p).rank() - 1);
        Tensor<S> dp(t.val(p).shape());
        for (Index row = 0; row < rows; ++row)
          for (Index j = 0; j < dlast; ++j)
            dp[row * dlast + j] = g[row * total_last + off2 + j];
        t.accum(p, std::move(dp));
        off2 += dlast;
      }
    });
    return o;
  }

  // Fused stable softmax + negative log likelihood of one class.
  Var softmax_cross_entropy(Var logits, Index label) {
    const Tensor<S>& l = val(logits);
    if (l.rank() != 1) fail(ErrorKind::dimension, "cross_entropy: logits must be rank-1");
    if (label < 0 || label >= l.extent(0)) fail(ErrorKind::contract, "cross_entropy: label out of range");
    S mx = l[0];
    for (Index j = 1; j < l.extent(0); ++j) mx = std::max(mx, l[j]);
    S sum = 0;
    for (Index j = 0; j < l.extent(0); ++j) sum += std::exp(l[j] - mx);
    Tensor<S> out(Shape{1});
    out[0] = mx + std::log(sum) - l[label];
    Var o = push(std::move(out));
    record("cross_entropy", o, [logits, o, label](Tape& t) {
      const Tensor<S>& L = t.val(logits);
      const S g = t.grad_of(o)[0];
      S mx2 = L[0];
      for (Index j = 1; j < L.extent(0); ++j) mx2 = std::max(mx2, L[j]);
      S sum2 = 0;
      for (Index j = 0; j < L.extent(0); ++j) sum2 += std::exp(L[j] - mx2);
      Tensor<S> dl(L.shape());
      for (Index j = 0; j < L.extent(0); ++j) {
        const S p = std::exp(L[j] - mx2) / sum2;
        dl[j] = g * (p - (j == label ? S(1) : S(0)));
      }
      t.accum(logits, std::move(dl));
    });
    return o;
  }

  // Severs the graph: the value flows forward, gradient does not flow back.
  Var detach(Var x) { return push(Tensor<S>(val(x))); }

  // ---- backward -------------------------------------------------------------

  void backward(Var loss) {
    if (ran_backward_) fail(ErrorKind::contract, "tape: backward already ran");
    ran_backward_ = true;
    const Tensor<S>& l = val(loss);
    if (l.numel() != 1)
      fail(ErrorKind::contract, "tape: loss must be scalar, got shape " + l.shape().str());
    grads_[static_cast<std::size_t>(loss.id)] = Tensor<S>::full(l.shape(), S(1));
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (grads_[static_cast<std::size_t>(it->out)].defined()) it->backward(*this);
    }
  }

  // Internal: gradient accumulation (+=) with lazy allocation.
  void accum(Var v, Tensor<S> g) {
    Tensor<S>& slot = grads_[static_cast<std::size_t>(v.id)];
    if (!slot.defined()) {
      slot = std::move(g);
    } else {
      slot.array() += g.array();
    }
  }

  const Tensor<S>& grad_of(Var v) const { return grads_[static_cast<std::size_t>(v.id)]; }

 private:
  Var push(Tensor<S> v) {
    values_.push_back(std::move(v));
    grads_.emplace_back();
    return Var{static_cast<Index>(values_.size()) - 1};
  }
  void record(const char* name, Var out, std::function<void(Tape&)> bw) {
    ops_.push_back(Op{name, out.id, std::move(bw)});
  }
  static void check_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
      fail(ErrorKind::dimension,
           std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }

  std::vector<Tensor<S>> values_;
  std::vector<Tensor<S>> grads_;
  std::vector<Op> ops_;
  bool ran_backward_ = false;
};

// Gradient of a scalar-valued function with respect to a parameter list.
// `fn` receives the tape plus one Var per parameter, in order.
template <typename S, typename F>
std::vector<Tensor<S>> grad(F&& fn, const std::vector<Tensor<S>>& params) {
  Tape<S> tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p));
  Var loss = fn(tape, vars);
  tape.backward(loss);
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

}  // namespace unibci
