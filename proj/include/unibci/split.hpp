#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "unibci/rng.hpp"
#include "unibci/spike_io.hpp"

namespace unibci {

// multi_day / few_shot shuffle trials globally (few_shot conventionally runs
// with a small train fraction); cross_day holds out whole sessions;
// within_session splits every session separately.
enum class SplitMode { multi_day, cross_day, few_shot, within_session };

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "multi-day" || s == "multi_day") return SplitMode::multi_day;
  if (s == "cross-day" || s == "cross_day") return SplitMode::cross_day;
  if (s == "few-shot" || s == "few_shot") return SplitMode::few_shot;
  if (s == "within-session" || s == "within_session") return SplitMode::within_session;
  fail(ErrorKind::validation, "split: unknown mode '" + s + "'");
}

inline std::string split_mode_str(SplitMode m) {
  switch (m) {
    case SplitMode::multi_day: return "multi-day";
    case SplitMode::cross_day: return "cross-day";
    case SplitMode::few_shot: return "few-shot";
    case SplitMode::within_session: return "within-session";
  }
  return "multi-day";
}

struct SplitSpec {
  SplitMode mode = SplitMode::multi_day;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<Index> train;
  std::vector<Index> test;
};

inline SplitResult split_by_sessions(const std::vector<std::string>& sessions,
                                     const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    fail(ErrorKind::validation, "split: train_fraction must lie in (0,1)");
  const Index n = static_cast<Index>(sessions.size());
  if (n < 2) fail(ErrorKind::infeasible_split, "split: need at least 2 trials");

  SplitResult out;
  auto finish = [&out]() {
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
  };

  switch (spec.mode) {
    case SplitMode::multi_day:
    case SplitMode::few_shot: {
      Rng rng(spec.seed);
      std::vector<Index> order = rng.permutation(n);
      const Index n_train = static_cast<Index>(spec.train_fraction * static_cast<double>(n));
      if (n_train == 0 || n_train == n)
        fail(ErrorKind::infeasible_split, "split: a side would be empty");
      out.train.assign(order.begin(), order.begin() + n_train);
      out.test.assign(order.begin() + n_train, order.end());
      finish();
      return out;
    }
    case SplitMode::cross_day: {
      std::map<std::string, std::vector<Index>> by_session;
      for (Index i = 0; i < n; ++i)
        by_session[sessions[static_cast<std::size_t>(i)]].push_back(i);
      const Index n_sess = static_cast<Index>(by_session.size());
      if (n_sess < 2)
        fail(ErrorKind::infeasible_split,
             "split: cross-day needs >= 2 sessions, found " + std::to_string(n_sess));
      std::vector<std::string> names;
      for (const auto& [name, _] : by_session) names.push_back(name);
      Rng rng(spec.seed);
      rng.shuffle(names);
      Index n_train_sess = static_cast<Index>(spec.train_fraction * static_cast<double>(n_sess));
      n_train_sess = std::clamp<Index>(n_train_sess, 1, n_sess - 1);
      for (Index s = 0; s < n_sess; ++s) {
        auto& dst = (s < n_train_sess) ? out.train : out.test;
        const auto& idx = by_session[names[static_cast<std::size_t>(s)]];
        dst.insert(dst.end(), idx.begin(), idx.end());
      }
      finish();
      return out;
    }
    case SplitMode::within_session: {
      std::map<std::string, std::vector<Index>> by_session;
      for (Index i = 0; i < n; ++i)
        by_session[sessions[static_cast<std::size_t>(i)]].push_back(i);
      std::uint64_t s_idx = 0;
      for (auto& [name, idx] : by_session) {
        const Index ns = static_cast<Index>(idx.size());
        const Index n_train = static_cast<Index>(spec.train_fraction * static_cast<double>(ns));
        if (n_train == 0 || n_train == ns)
          fail(ErrorKind::infeasible_split,
               "split: session '" + name + "' cannot produce both sides");
        Rng rng(mix64(spec.seed, s_idx++));
        rng.shuffle(idx);
        out.train.insert(out.train.end(), idx.begin(), idx.begin() + n_train);
        out.test.insert(out.test.end(), idx.begin() + n_train, idx.end());
      }
      finish();
      return out;
    }
  }
  fail(ErrorKind::validation, "split: unreachable mode");
}

inline SplitResult split_trials(const std::vector<SpikeRecording>& recs, const SplitSpec& spec) {
  std::vector<std::string> sessions;
  sessions.reserve(recs.size());
  for (const auto& rec : recs) sessions.push_back(rec.meta.session);
  return split_by_sessions(sessions, spec);
}

}  // namespace unibci
