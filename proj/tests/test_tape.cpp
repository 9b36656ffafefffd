#include <doctest.h>

#include <cmath>
#include <memory>

#include "helpers.hpp"
#include "unibci/gradcheck.hpp"
#include "unibci/tape.hpp"

using namespace unibci;
using testutil::max_abs_diff;
using testutil::rand_tensor;

TEST_CASE("gradient of a sum is ones; of a quadratic is 2x; of a constant is zero") {
  Tensor<double> p(Shape{2}, {1, 2});

  auto gsum = grad([](Tape<double>& t, const std::vector<Var>& v) { return t.reduce_sum(v[0]); },
                   std::vector<Tensor<double>>{p});
  CHECK(gsum[0][0] == 1.0);
  CHECK(gsum[0][1] == 1.0);

  auto gsq = grad(
      [](Tape<double>& t, const std::vector<Var>& v) { return t.reduce_sum(t.mul(v[0], v[0])); },
      std::vector<Tensor<double>>{p});
  CHECK(gsq[0][0] == 2.0);
  CHECK(gsq[0][1] == 4.0);

  auto gconst = grad(
      [](Tape<double>& t, const std::vector<Var>& v) {
        (void)v;
        return t.reduce_sum(t.constant(Tensor<double>(Shape{1}, {3.0})));
      },
      std::vector<Tensor<double>>{p});
  CHECK(gconst[0][0] == 0.0);
  CHECK(gconst[0][1] == 0.0);
}

TEST_CASE("backward requires a scalar loss and runs once") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>(Shape{2}, {1, 2}));
  CHECK_THROWS_AS(t.backward(x), Error);

  Tape<double> t2;
  Var y = t2.leaf(Tensor<double>(Shape{2}, {1, 2}));
  Var l = t2.reduce_sum(y);
  t2.backward(l);
  CHECK_THROWS_AS(t2.backward(l), Error);
}

TEST_CASE("every op produces a fresh output id in creation order") {
  Tape<double> t;
  Var a = t.leaf(Tensor<double>(Shape{2, 2}, {1, 2, 3, 4}));
  Var b = t.leaf(Tensor<double>(Shape{2, 2}, {5, 6, 7, 8}));
  t.matmul(a, b);
  Var s = t.add(a, b);
  t.reduce_sum(s);
  Index prev = -1;
  for (const auto& op : t.ops()) {
    CHECK(op.out > prev);
    prev = op.out;
  }
}

TEST_CASE("gradcheck on a known quadratic is tiny and empty params pass trivially") {
  Rng rng(31);
  auto p = rand_tensor<double>(Shape{3, 3}, rng);
  auto rep = gradcheck(
      [](Tape<double>& t, const std::vector<Var>& v) { return t.reduce_sum(t.mul(v[0], v[0])); },
      {p});
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-8);
  CHECK(rep.n_checked == 9);

  auto empty = gradcheck(
      [](Tape<double>& t, const std::vector<Var>&) {
        return t.reduce_sum(t.constant(Tensor<double>(Shape{1}, {1.0})));
      },
      {});
  CHECK(empty.pass);
  CHECK(empty.n_checked == 0);
}

// Each primitive is checked against central differences through a random
// linear functional, so every output coordinate influences the loss.
namespace {

template <typename Fn>
void check_primitive(const char* name, Fn&& build, std::vector<Tensor<double>> params,
                     double tol = 1e-6) {
  INFO(name);
  Rng rng(mix64(0xabcdef, static_cast<std::uint64_t>(params.size())));
  auto rep = gradcheck(
      [&](Tape<double>& t, const std::vector<Var>& v) {
        Var out = build(t, v);
        // project to a scalar through fixed pseudo-random weights
        Tensor<double> w(t.val(out).shape());
        Rng wr(99);
        for (Index i = 0; i < w.numel(); ++i) w[i] = wr.normal();
        return t.reduce_sum(t.mul(out, t.constant(std::move(w))));
      },
      std::move(params), GradCheckOptions{1e-5, tol, 400, 7});
  CHECK(rep.pass);
  INFO("max_rel_err=" << rep.max_rel_err);
  CHECK(rep.max_rel_err <= tol);
}

}  // namespace

TEST_CASE("finite differences validate every primitive adjoint") {
  Rng rng(32);

  check_primitive(
      "matmul", [](Tape<double>& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
      {rand_tensor<double>(Shape{3, 4}, rng), rand_tensor<double>(Shape{4, 2}, rng)});

  check_primitive(
      "bmm", [](Tape<double>& t, const std::vector<Var>& v) { return t.bmm(v[0], v[1]); },
      {rand_tensor<double>(Shape{2, 3, 4}, rng), rand_tensor<double>(Shape{2, 4, 2}, rng)});
  check_primitive(
      "bmm_ta", [](Tape<double>& t, const std::vector<Var>& v) { return t.bmm(v[0], v[1], true); },
      {rand_tensor<double>(Shape{2, 4, 3}, rng), rand_tensor<double>(Shape{2, 4, 2}, rng)});
  check_primitive(
      "bmm_tb",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.bmm(v[0], v[1], false, true); },
      {rand_tensor<double>(Shape{2, 3, 4}, rng), rand_tensor<double>(Shape{2, 5, 4}, rng)});

  check_primitive(
      "add", [](Tape<double>& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); },
      {rand_tensor<double>(Shape{3, 4}, rng), rand_tensor<double>(Shape{3, 4}, rng)});
  check_primitive(
      "sub", [](Tape<double>& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); },
      {rand_tensor<double>(Shape{3, 4}, rng), rand_tensor<double>(Shape{3, 4}, rng)});
  check_primitive(
      "mul", [](Tape<double>& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); },
      {rand_tensor<double>(Shape{3, 4}, rng), rand_tensor<double>(Shape{3, 4}, rng)});
  check_primitive(
      "scale", [](Tape<double>& t, const std::vector<Var>& v) { return t.scale(v[0], -1.7); },
      {rand_tensor<double>(Shape{3, 4}, rng)});

  check_primitive(
      "add_broadcast",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.add_broadcast(v[0], v[1]); },
      {rand_tensor<double>(Shape{2, 3, 4}, rng), rand_tensor<double>(Shape{3, 4}, rng)});
  check_primitive(
      "repeat_axis",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.repeat_axis(v[0], 1, 5); },
      {rand_tensor<double>(Shape{2, 1, 3}, rng)});

  check_primitive(
      "transpose",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.transpose(v[0], {1, 2, 0}); },
      {rand_tensor<double>(Shape{2, 3, 4}, rng)});
  check_primitive(
      "reshape",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.reshape(v[0], Shape{4, 6}); },
      {rand_tensor<double>(Shape{2, 3, 4}, rng)});

  check_primitive(
      "softmax",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.softmax_lastaxis(v[0]); },
      {rand_tensor<double>(Shape{3, 5}, rng)});
  check_primitive(
      "layernorm",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.layernorm(v[0], v[1], v[2]); },
      {rand_tensor<double>(Shape{3, 6}, rng), rand_tensor<double>(Shape{6}, rng),
       rand_tensor<double>(Shape{6}, rng)});
  check_primitive(
      "avgpool",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.avgpool_axis(v[0], 2); },
      {rand_tensor<double>(Shape{2, 3, 4, 5}, rng)});
  check_primitive(
      "gelu", [](Tape<double>& t, const std::vector<Var>& v) { return t.gelu(v[0]); },
      {rand_tensor<double>(Shape{4, 4}, rng)});

  auto mask = std::make_shared<std::vector<std::uint8_t>>(12, std::uint8_t(0));
  (*mask)[3] = 1;
  (*mask)[7] = 1;
  check_primitive(
      "masked_fill",
      [mask](Tape<double>& t, const std::vector<Var>& v) {
        return t.masked_fill(v[0], mask, -3.0);
      },
      {rand_tensor<double>(Shape{3, 4}, rng)});

  check_primitive(
      "concat",
      [](Tape<double>& t, const std::vector<Var>& v) {
        return t.concat_lastaxis({v[0], v[1], v[2]});
      },
      {rand_tensor<double>(Shape{3, 2}, rng), rand_tensor<double>(Shape{3, 4}, rng),
       rand_tensor<double>(Shape{3, 1}, rng)});

  check_primitive(
      "dropout_training",
      [](Tape<double>& t, const std::vector<Var>& v) { return t.dropout(v[0], 0.4, 123, true); },
      {rand_tensor<double>(Shape{4, 5}, rng)});

  check_primitive(
      "cross_entropy",
      [](Tape<double>& t, const std::vector<Var>& v) {
        return t.softmax_cross_entropy(v[0], 2);
      },
      {rand_tensor<double>(Shape{6}, rng)});
}

TEST_CASE("softmax through a window mask blocks gradient at masked keys") {
  Rng rng(33);
  auto x = rand_tensor<double>(Shape{2, 4}, rng);
  auto mask = std::make_shared<std::vector<std::uint8_t>>(8, std::uint8_t(0));
  (*mask)[1] = 1;  // row 0, col 1
  (*mask)[6] = 1;  // row 1, col 2

  Tape<double> t;
  Var v = t.leaf(x);
  Var m = t.masked_fill(v, mask, -std::numeric_limits<double>::infinity());
  Var s = t.softmax_lastaxis(m);
  Var l = t.reduce_sum(t.mul(s, s));
  t.backward(l);
  auto g = t.grad(v);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 2) == 0.0);
  CHECK(g(0, 0) != 0.0);
  CHECK(all_finite(g));
}

TEST_CASE("detach severs gradient flow while passing values through") {
  Tensor<double> p(Shape{2}, {1.5, -0.5});
  auto g = grad(
      [](Tape<double>& t, const std::vector<Var>& v) {
        Var d = t.detach(t.mul(v[0], v[0]));
        return t.reduce_sum(t.mul(d, v[0]));  // loss = sum(detach(p^2) * p)
      },
      std::vector<Tensor<double>>{p});
  // with the detach, d/dp = p^2 exactly (no 3p^2 term)
  CHECK(g[0][0] == doctest::Approx(1.5 * 1.5).epsilon(1e-12));
  CHECK(g[0][1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("dropout is identity in eval mode and a deterministic mask in training") {
  Rng rng(34);
  auto x = rand_tensor<double>(Shape{8, 8}, rng);

  Tape<double> te;
  Var v = te.leaf(x);
  Var o = te.dropout(v, 0.5, 42, false);
  CHECK(o.id == v.id);  // identity: no op recorded

  Tape<double> t1, t2;
  Var a1 = t1.dropout(t1.leaf(x), 0.5, 42, true);
  Var a2 = t2.dropout(t2.leaf(x), 0.5, 42, true);
  CHECK(max_abs_diff(t1.val(a1), t2.val(a2)) == 0.0);

  // surviving entries are scaled by 1/(1-p)
  int kept = 0;
  for (Index i = 0; i < x.numel(); ++i) {
    const double y = t1.val(a1)[i];
    if (y != 0.0) {
      CHECK(y == doctest::Approx(x[i] * 2.0).epsilon(1e-12));
      ++kept;
    }
  }
  CHECK(kept > 8);
  CHECK(kept < 56);

  Tape<double> t3;
  CHECK_THROWS_AS(t3.dropout(t3.leaf(x), 1.0, 42, true), Error);
}

TEST_CASE("cross entropy equals composed log-softmax") {
  Rng rng(35);
  auto logits = rand_tensor<double>(Shape{5}, rng, 2.0);
  Tape<double> t;
  Var l = t.softmax_cross_entropy(t.leaf(logits), 3);
  double mx = logits[0];
  for (Index j = 1; j < 5; ++j) mx = std::max(mx, logits[j]);
  double sum = 0;
  for (Index j = 0; j < 5; ++j) sum += std::exp(logits[j] - mx);
  const double expect = -(logits[3] - mx - std::log(sum));
  CHECK(t.val(l)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("shape mismatches raise dimension errors") {
  Tape<double> t;
  Var a = t.leaf(Tensor<double>(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = t.leaf(Tensor<double>(Shape{3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(t.add(a, b), Error);
  CHECK_THROWS_AS(t.mul(a, b), Error);
  try {
    t.add(a, b);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension);
  }
}
