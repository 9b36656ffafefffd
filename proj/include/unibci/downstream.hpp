#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "unibci/model.hpp"
#include "unibci/split.hpp"

namespace unibci {

enum class TaskKind { classification, regression };

inline TaskKind parse_task(const std::string& s) {
  if (s == "cls" || s == "classification") return TaskKind::classification;
  if (s == "reg" || s == "regression") return TaskKind::regression;
  fail(ErrorKind::validation, "task: unknown kind '" + s + "' (expected cls or reg)");
}

// ---------------------------------------------------------------------------
// Metrics. Formulas are pinned (ascending class order, one final division) so
// independent implementations can match bit for bit.
// ---------------------------------------------------------------------------

struct ClassificationMetrics {
  double balanced_accuracy = 0;
  double weighted_f1 = 0;
  std::vector<double> per_class_recall;   // -1 for classes absent from y_true
  std::vector<std::int64_t> confusion;    // [n_classes, n_classes], rows = true
  Index n_classes = 0;

  std::int64_t at(Index t, Index p) const {
    return confusion[static_cast<std::size_t>(t * n_classes + p)];
  }
};

inline ClassificationMetrics classification_metrics(const std::vector<Index>& y_true,
                                                    const std::vector<Index>& y_pred,
                                                    Index n_classes) {
  if (y_true.empty()) fail(ErrorKind::contract, "metrics: empty label vectors");
  if (y_true.size() != y_pred.size())
    fail(ErrorKind::dimension, "metrics: y_true and y_pred lengths differ");
  if (n_classes < 1) fail(ErrorKind::validation, "metrics: n_classes must be >= 1");
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes)
      fail(ErrorKind::validation, "metrics: label outside [0, n_classes)");

  ClassificationMetrics m;
  m.n_classes = n_classes;
  m.confusion.assign(static_cast<std::size_t>(n_classes * n_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i)
    ++m.confusion[static_cast<std::size_t>(y_true[i] * n_classes + y_pred[i])];

  // per-class tallies in one pass over the pairs
  std::vector<std::int64_t> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> support(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> predicted(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++support[static_cast<std::size_t>(y_true[i])];
    ++predicted[static_cast<std::size_t>(y_pred[i])];
    if (y_true[i] == y_pred[i]) ++tp[static_cast<std::size_t>(y_true[i])];
  }

  m.per_class_recall.assign(static_cast<std::size_t>(n_classes), -1.0);
  double recall_sum = 0;
  Index present = 0;
  double weighted_f1_sum = 0;
  for (Index c = 0; c < n_classes; ++c) {
    const auto sc = static_cast<std::size_t>(c);
    if (support[sc] == 0) continue;
    ++present;
    const double recall = static_cast<double>(tp[sc]) / static_cast<double>(support[sc]);
    m.per_class_recall[sc] = recall;
    recall_sum += recall;
    const double precision =
        predicted[sc] == 0 ? 0.0
                           : static_cast<double>(tp[sc]) / static_cast<double>(predicted[sc]);
    const double f1 =
        (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    weighted_f1_sum += static_cast<double>(support[sc]) * f1;
  }
  m.balanced_accuracy = recall_sum / static_cast<double>(present);
  m.weighted_f1 = weighted_f1_sum / static_cast<double>(y_true.size());
  return m;
}

inline double balanced_accuracy(const std::vector<Index>& y_true, const std::vector<Index>& y_pred,
                                Index n_classes) {
  return classification_metrics(y_true, y_pred, n_classes).balanced_accuracy;
}

inline double weighted_f1(const std::vector<Index>& y_true, const std::vector<Index>& y_pred,
                          Index n_classes) {
  return classification_metrics(y_true, y_pred, n_classes).weighted_f1;
}

// 1 - SSres/SStot per output column, averaged uniformly over columns.
// Inputs are [n] or [n, k]; a constant truth column is undefined.
inline double r_squared(const Tensor<double>& y_true, const Tensor<double>& y_pred) {
  if (!(y_true.shape() == y_pred.shape()))
    fail(ErrorKind::dimension, "r_squared: shape mismatch");
  if (y_true.rank() > 2) fail(ErrorKind::dimension, "r_squared: inputs must be [n] or [n,k]");
  const Index n = y_true.extent(0);
  const Index k = y_true.rank() == 2 ? y_true.extent(1) : 1;
  if (n < 2) fail(ErrorKind::contract, "r_squared: need at least 2 samples");
  double acc = 0;
  for (Index j = 0; j < k; ++j) {
    double mean = 0;
    for (Index i = 0; i < n; ++i) mean += y_true[i * k + j];
    mean /= static_cast<double>(n);
    double ss_res = 0, ss_tot = 0;
    for (Index i = 0; i < n; ++i) {
      const double dt = y_true[i * k + j] - y_pred[i * k + j];
      const double dm = y_true[i * k + j] - mean;
      ss_res += dt * dt;
      ss_tot += dm * dm;
    }
    if (ss_tot == 0.0)
      fail(ErrorKind::degenerate, "r_squared: y_true column " + std::to_string(j) + " is constant");
    acc += 1.0 - ss_res / ss_tot;
  }
  return acc / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Task targets inferred from prepared trials.
// ---------------------------------------------------------------------------

template <typename S>
Index infer_n_classes(const std::vector<PreparedTrial<S>>& trials) {
  Index n = 0;
  for (const auto& t : trials) {
    if (t.class_label < 0)
      fail(ErrorKind::validation, "task: classification needs a class label on every trial");
    n = std::max(n, t.class_label + 1);
  }
  if (n < 2) fail(ErrorKind::validation, "task: need at least 2 classes");
  return n;
}

template <typename S>
Index infer_reg_width(const std::vector<PreparedTrial<S>>& trials) {
  Index k = -1;
  for (const auto& t : trials) {
    if (!t.reg_target.defined())
      fail(ErrorKind::validation, "task: regression needs a sequence label on every trial");
    const Index kt = t.reg_target.extent(1);
    if (k < 0) k = kt;
    if (k != kt) fail(ErrorKind::validation, "task: inconsistent regression widths");
  }
  if (k < 1) fail(ErrorKind::validation, "task: empty corpus");
  return k;
}

template <typename S>
Index task_output_dim(const std::vector<PreparedTrial<S>>& trials, const RunConfig& cfg,
                      TaskKind task) {
  return task == TaskKind::classification ? infer_n_classes(trials)
                                          : cfg.t_norm * infer_reg_width(trials);
}

// ---------------------------------------------------------------------------
// Fine-tuning: full-parameter training of tokenizer + encoder + task head.
// ---------------------------------------------------------------------------

template <typename S>
Var task_loss(Tape<S>& tape, const PreparedTrial<S>& trial, const BoundParams<S>& bp,
              const RunConfig& cfg, TaskKind task, DropoutStream& drop) {
  Var out = task_output(tape, trial, bp, cfg, drop);
  if (task == TaskKind::classification) {
    if (trial.class_label < 0) fail(ErrorKind::validation, "task: trial has no class label");
    return tape.softmax_cross_entropy(out, trial.class_label);
  }
  if (!trial.reg_target.defined()) fail(ErrorKind::validation, "task: trial has no sequence label");
  Var pred = tape.reshape(out, trial.reg_target.shape());
  Var diff = tape.sub(pred, tape.constant(trial.reg_target));
  Var sq = tape.mul(diff, diff);
  return tape.scale(tape.reduce_sum(sq), S(1.0 / static_cast<double>(trial.reg_target.numel())));
}

struct FinetuneResult {
  std::vector<double> epoch_mean_loss;
};

// Constant-lr AdamW over the train subset; the task head is created on the
// first call. Deterministic under (seed, dtype, single thread).
template <typename S>
FinetuneResult finetune(Model<S>& model, const std::vector<PreparedTrial<S>>& trials,
                        const std::vector<Index>& train_idx, TaskKind task,
                        std::ostream* progress = nullptr) {
  const RunConfig& cfg = model.cfg;
  validate_config(cfg);
  if (train_idx.empty()) fail(ErrorKind::validation, "finetune: empty training subset");
  for (Index i : train_idx)
    if (i < 0 || i >= static_cast<Index>(trials.size()))
      fail(ErrorKind::validation, "finetune: train index out of range");
  if (!model.params.contains(kHeadW1))
    add_task_head(model.params, cfg, task_output_dim(trials, cfg, task));

  AdamWConfig ocfg;
  ocfg.lr = cfg.ft_lr;
  ocfg.beta1 = cfg.beta1;
  ocfg.beta2 = cfg.beta2;
  ocfg.eps = cfg.adam_eps;
  ocfg.weight_decay = cfg.weight_decay;
  OptimState<S> st = OptimState<S>::like(model.params);

  const Index n = static_cast<Index>(train_idx.size());
  FinetuneResult result;
  for (Index e = 0; e < cfg.ft_epochs; ++e) {
    Rng order_rng(mix64(cfg.seed, 800, static_cast<std::uint64_t>(e)));
    const std::vector<Index> order = order_rng.permutation(n);
    double loss_sum = 0;
    for (Index start = 0; start < n; start += cfg.ft_batch_size) {
      const Index stop = std::min<Index>(n, start + cfg.ft_batch_size);
      std::vector<Tensor<S>> accum;
      accum.reserve(static_cast<std::size_t>(model.params.size()));
      for (Index i = 0; i < model.params.size(); ++i)
        accum.push_back(Tensor<S>::zeros(model.params.value(i).shape()));
      for (Index k = start; k < stop; ++k) {
        const Index idx = train_idx[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        Tape<S> tape;
        auto bp = BoundParams<S>::bind(tape, model.params);
        DropoutStream drop{cfg.dropout,
                           mix64(cfg.seed, 900 + static_cast<std::uint64_t>(e),
                                 static_cast<std::uint64_t>(k)),
                           true, 0};
        Var loss = task_loss(tape, trials[static_cast<std::size_t>(idx)], bp, cfg, task, drop);
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
      (*progress) << "epoch " << e << "/" << cfg.ft_epochs
                  << " mean_loss=" << result.epoch_mean_loss.back() << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation (dropout off, pure).
// ---------------------------------------------------------------------------

// Runs fn(i) for i in [0, n), split into contiguous blocks across up to
// n_threads workers. Each index writes only its own preassigned slots, so the
// result is bitwise identical at any thread count.
template <typename Fn>
void for_each_index(Index n, Index n_threads, Fn&& fn) {
  if (n_threads <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const Index k = std::min(n_threads, n);
  std::exception_ptr err = nullptr;
  std::mutex err_mu;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(k));
  for (Index w = 0; w < k; ++w) {
    const Index lo = n * w / k, hi = n * (w + 1) / k;
    workers.emplace_back([lo, hi, &fn, &err, &err_mu] {
      try {
        for (Index i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (err) std::rethrow_exception(err);
}

template <typename S>
Index predict_class(const Model<S>& model, const PreparedTrial<S>& trial) {
  Tape<S> tape;
  auto bp = BoundParams<S>::bind(tape, model.params);
  DropoutStream drop;
  Var out = task_output(tape, trial, bp, model.cfg, drop);
  const Tensor<S>& logits = tape.val(out);
  Index best = 0;
  for (Index c = 1; c < logits.numel(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

template <typename S>
Tensor<double> predict_sequence(const Model<S>& model, const PreparedTrial<S>& trial) {
  Tape<S> tape;
  auto bp = BoundParams<S>::bind(tape, model.params);
  DropoutStream drop;
  Var out = task_output(tape, trial, bp, model.cfg, drop);
  const Index k = tape.val(out).numel() / model.cfg.t_norm;
  return tape.val(tape.reshape(out, Shape{model.cfg.t_norm, k})).template cast<double>();
}

struct SplitMetrics {
  std::string split;  // "train" | "test"
  TaskKind task = TaskKind::classification;
  ClassificationMetrics cls;
  double r2 = 0;
};

template <typename S>
SplitMetrics evaluate_subset(const Model<S>& model, const std::vector<PreparedTrial<S>>& trials,
                             const std::vector<Index>& subset, TaskKind task,
                             const std::string& split_name, Index n_threads = 1) {
  if (subset.empty()) fail(ErrorKind::validation, "eval: empty subset");
  const Index n_sub = static_cast<Index>(subset.size());
  SplitMetrics out;
  out.split = split_name;
  out.task = task;
  if (task == TaskKind::classification) {
    const Index n_classes = infer_n_classes(trials);
    std::vector<Index> y_true(subset.size()), y_pred(subset.size());
    for_each_index(n_sub, n_threads, [&](Index j) {
      const Index i = subset[static_cast<std::size_t>(j)];
      y_true[static_cast<std::size_t>(j)] = trials[static_cast<std::size_t>(i)].class_label;
      y_pred[static_cast<std::size_t>(j)] = predict_class(model, trials[static_cast<std::size_t>(i)]);
    });
    out.cls = classification_metrics(y_true, y_pred, n_classes);
  } else {
    const Index k = infer_reg_width(trials);
    const Index rows = n_sub * model.cfg.t_norm;
    Tensor<double> yt(Shape{rows, k});
    Tensor<double> yp(Shape{rows, k});
    for_each_index(n_sub, n_threads, [&](Index s) {
      const auto& trial = trials[static_cast<std::size_t>(subset[static_cast<std::size_t>(s)])];
      const Tensor<double> pred = predict_sequence(model, trial);
      Index r = s * model.cfg.t_norm;
      for (Index t = 0; t < model.cfg.t_norm; ++t, ++r)
        for (Index j = 0; j < k; ++j) {
          yt(r, j) = static_cast<double>(trial.reg_target(t, j));
          yp(r, j) = pred(t, j);
        }
    });
    out.r2 = r_squared(yt, yp);
  }
  return out;
}

inline std::string metrics_csv(const std::vector<SplitMetrics>& rows) {
  std::string out = "split,metric,value\n";
  char buf[96];
  for (const auto& m : rows) {
    if (m.task == TaskKind::classification) {
      std::snprintf(buf, sizeof(buf), "%s,balanced_accuracy,%.17g\n", m.split.c_str(),
                    m.cls.balanced_accuracy);
      out += buf;
      std::snprintf(buf, sizeof(buf), "%s,weighted_f1,%.17g\n", m.split.c_str(),
                    m.cls.weighted_f1);
      out += buf;
    } else {
      std::snprintf(buf, sizeof(buf), "%s,r_squared,%.17g\n", m.split.c_str(), m.r2);
      out += buf;
    }
  }
  return out;
}

// Rows are true classes, columns predictions; one leading header row/column.
inline std::string confusion_csv(const ClassificationMetrics& m) {
  std::string out = "true\\pred";
  for (Index c = 0; c < m.n_classes; ++c) out += "," + std::to_string(c);
  out += "\n";
  for (Index t = 0; t < m.n_classes; ++t) {
    out += std::to_string(t);
    for (Index p = 0; p < m.n_classes; ++p) out += "," + std::to_string(m.at(t, p));
    out += "\n";
  }
  return out;
}

// Deterministic train/test assignment shared by finetune and eval.
template <typename S>
SplitResult split_prepared(const std::vector<PreparedTrial<S>>& trials, const RunConfig& cfg) {
  SplitSpec spec;
  spec.mode = parse_split_mode(cfg.split);
  spec.train_fraction = cfg.train_fraction;
  spec.seed = mix64(cfg.seed, 77);
  std::vector<std::string> sessions;
  sessions.reserve(trials.size());
  for (const auto& t : trials) sessions.push_back(t.session);
  return split_by_sessions(sessions, spec);
}

}  // namespace unibci
