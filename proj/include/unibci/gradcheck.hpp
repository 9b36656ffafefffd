#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "unibci/tape.hpp"

namespace unibci {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference half-step
  double tol = 1e-6;        // max allowed relative error
  Index n_coords = 200;     // coordinates sampled across all parameters
  std::uint64_t seed = 0;   // coordinate sampling seed
};

struct GradCheckCoord {
  std::size_t param = 0;
  Index flat = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0;
  Index n_checked = 0;
  GradCheckCoord worst;
};

// Central-difference check of reverse-mode gradients, always in 64-bit.
// rel_err = |analytic - numeric| / max(1, |analytic|, |numeric|).
// An empty parameter list passes trivially with zero coordinates.
template <typename F>
GradCheckReport gradcheck(F&& fn, std::vector<Tensor<double>> params,
                          const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  if (params.empty()) return rep;

  const std::vector<Tensor<double>> analytic = grad(fn, params);

  Index total = 0;
  for (const auto& p : params) total += p.numel();
  const Index want = std::min<Index>(opt.n_coords, total);

  // Sample distinct flat coordinates over the concatenated parameter space.
  Rng rng(opt.seed);
  std::vector<Index> coords;
  if (want == total) {
    coords.resize(static_cast<std::size_t>(total));
    for (Index i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  } else {
    std::vector<Index> all(static_cast<std::size_t>(total));
    for (Index i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
  }

  auto eval = [&](const std::vector<Tensor<double>>& p) -> double {
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(p.size());
    for (const auto& t : p) vars.push_back(tape.leaf(t));
    Var loss = fn(tape, vars);
    const Tensor<double>& l = tape.val(loss);
    if (l.numel() != 1) fail(ErrorKind::contract, "gradcheck: loss must be scalar");
    return l[0];
  };

  for (Index c : coords) {
    std::size_t pi = 0;
    Index off = c;
    while (off >= params[pi].numel()) {
      off -= params[pi].numel();
      ++pi;
    }
    const double orig = params[pi][off];
    params[pi][off] = orig + opt.step;
    const double fp = eval(params);
    params[pi][off] = orig - opt.step;
    const double fm = eval(params);
    params[pi][off] = orig;

    const double num = (fp - fm) / (2.0 * opt.step);
    const double ana = analytic[pi][off];
    const double rel = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
    ++rep.n_checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst = GradCheckCoord{pi, off, ana, num, rel};
    }
  }
  rep.pass = rep.max_rel_err <= opt.tol;
  return rep;
}

}  // namespace unibci
