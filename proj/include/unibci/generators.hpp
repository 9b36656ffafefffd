#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "unibci/rng.hpp"
#include "unibci/spike_io.hpp"

namespace unibci {

// Eight-direction reaching with cosine-tuned Poisson units. Trials cycle
// through the target classes; sources (subject/session pairs) partition the
// trial range into contiguous blocks so every source sees every class.
struct CenterOutConfig {
  Index n_trials = 64;
  Index n_units = 70;
  Index t_raw = 1000;
  Index n_classes = 8;
  Index n_sources = 1;
  double sample_rate_hz = 100.0;
  double base_rate_hz = 30.0;
  double mod_depth_hz = 25.0;
  double tuning_jitter = 0.1;  // fraction of the preferred-direction spacing
  std::uint64_t seed = 0;
  std::string species = "macaque";
  std::string dataset = "SYN-CO";
  std::string region = "M1";
  std::string task = "center-out";
};

// AR(1) hand-velocity reaching with rectified-linear rate coding; labels are
// the per-step velocity sequence.
struct KinematicsConfig {
  Index n_trials = 64;
  Index n_units = 30;
  Index t_raw = 1000;
  Index k_outputs = 2;
  Index n_sources = 1;
  double sample_rate_hz = 100.0;
  double ar_coeff = 0.98;
  double vel_std = 1.0;
  double base_rate_lo_hz = 8.0;
  double base_rate_hi_hz = 18.0;
  double gain_hz = 12.0;
  std::uint64_t seed = 0;
  std::string species = "macaque";
  std::string dataset = "SYN-KIN";
  std::string region = "M1";
  std::string task = "random-reach";
};

namespace detail {

inline std::string source_tag(const char* prefix, Index i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03lld", prefix, static_cast<long long>(i + 1));
  return buf;
}

inline Index source_of_trial(Index trial, Index n_trials, Index n_sources) {
  return std::min(trial * n_sources / n_trials, n_sources - 1);
}

}  // namespace detail

inline std::vector<SpikeRecording> gen_center_out(const CenterOutConfig& cfg) {
  if (cfg.n_trials < 0 || cfg.n_units < 1 || cfg.t_raw < 1 || cfg.n_classes < 1 ||
      cfg.n_sources < 1 || !(cfg.sample_rate_hz > 0))
    fail(ErrorKind::validation, "gen_center_out: bad configuration");
  if (cfg.mod_depth_hz > cfg.base_rate_hz)
    fail(ErrorKind::generation, "gen_center_out: modulation depth exceeds base rate (negative rates)");

  // Preferred directions: evenly spaced with a seeded jitter.
  const double spacing = 2.0 * std::numbers::pi / static_cast<double>(cfg.n_units);
  Rng unit_rng(mix64(cfg.seed, 1));
  std::vector<double> pref(static_cast<std::size_t>(cfg.n_units));
  for (Index c = 0; c < cfg.n_units; ++c)
    pref[static_cast<std::size_t>(c)] =
        spacing * static_cast<double>(c) + cfg.tuning_jitter * spacing * unit_rng.uniform(-0.5, 0.5);

  std::vector<SpikeRecording> recs;
  recs.reserve(static_cast<std::size_t>(cfg.n_trials));
  for (Index trial = 0; trial < cfg.n_trials; ++trial) {
    const Index cls = trial % cfg.n_classes;
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(cls) /
                         static_cast<double>(cfg.n_classes);
    const Index src = detail::source_of_trial(trial, cfg.n_trials, cfg.n_sources);

    SpikeRecording rec;
    rec.t_raw = cfg.t_raw;
    rec.c_raw = cfg.n_units;
    rec.sample_rate_hz = cfg.sample_rate_hz;
    rec.meta = MetadataRecord{cfg.species, cfg.dataset, detail::source_tag("S", src),
                              cfg.region,  cfg.task,    detail::source_tag("day-", src)};
    rec.label_kind = LabelKind::class_index;
    rec.class_label = static_cast<double>(cls);
    rec.counts.resize(static_cast<std::size_t>(cfg.t_raw * cfg.n_units));

    Rng rng(mix64(cfg.seed, 2, static_cast<std::uint64_t>(trial)));
    std::vector<double> lam(static_cast<std::size_t>(cfg.n_units));
    for (Index c = 0; c < cfg.n_units; ++c) {
      const double rate_hz =
          cfg.base_rate_hz + cfg.mod_depth_hz * std::cos(theta - pref[static_cast<std::size_t>(c)]);
      lam[static_cast<std::size_t>(c)] = rate_hz / cfg.sample_rate_hz;
    }
    for (Index t = 0; t < cfg.t_raw; ++t)
      for (Index c = 0; c < cfg.n_units; ++c)
        rec.counts[static_cast<std::size_t>(t * cfg.n_units + c)] =
            rng.poisson(lam[static_cast<std::size_t>(c)]);
    recs.push_back(std::move(rec));
  }
  return recs;
}

inline std::vector<SpikeRecording> gen_kinematics(const KinematicsConfig& cfg) {
  if (cfg.n_trials < 0 || cfg.n_units < 1 || cfg.t_raw < 1 || cfg.k_outputs < 1 ||
      cfg.n_sources < 1 || !(cfg.sample_rate_hz > 0))
    fail(ErrorKind::validation, "gen_kinematics: bad configuration");
  if (cfg.ar_coeff < 0.0 || cfg.ar_coeff >= 1.0)
    fail(ErrorKind::validation, "gen_kinematics: ar_coeff must be in [0,1)");

  // Unit coding model: rate = relu(base + gain * <u, v>) with random unit
  // direction u and uniform base rate.
  Rng unit_rng(mix64(cfg.seed, 1));
  std::vector<double> dirs(static_cast<std::size_t>(cfg.n_units * cfg.k_outputs));
  std::vector<double> base(static_cast<std::size_t>(cfg.n_units));
  for (Index c = 0; c < cfg.n_units; ++c) {
    double norm = 0;
    for (Index k = 0; k < cfg.k_outputs; ++k) {
      const double g = unit_rng.normal();
      dirs[static_cast<std::size_t>(c * cfg.k_outputs + k)] = g;
      norm += g * g;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (Index k = 0; k < cfg.k_outputs; ++k)
      dirs[static_cast<std::size_t>(c * cfg.k_outputs + k)] /= norm;
    base[static_cast<std::size_t>(c)] = unit_rng.uniform(cfg.base_rate_lo_hz, cfg.base_rate_hi_hz);
  }

  const double innov = cfg.vel_std * std::sqrt(1.0 - cfg.ar_coeff * cfg.ar_coeff);
  std::vector<SpikeRecording> recs;
  recs.reserve(static_cast<std::size_t>(cfg.n_trials));
  for (Index trial = 0; trial < cfg.n_trials; ++trial) {
    const Index src = detail::source_of_trial(trial, cfg.n_trials, cfg.n_sources);
    SpikeRecording rec;
    rec.t_raw = cfg.t_raw;
    rec.c_raw = cfg.n_units;
    rec.sample_rate_hz = cfg.sample_rate_hz;
    rec.meta = MetadataRecord{cfg.species, cfg.dataset, detail::source_tag("S", src),
                              cfg.region,  cfg.task,    detail::source_tag("day-", src)};
    rec.label_kind = LabelKind::sequence;
    rec.label_dim = cfg.k_outputs;
    rec.label_seq.resize(static_cast<std::size_t>(cfg.t_raw * cfg.k_outputs));
    rec.counts.resize(static_cast<std::size_t>(cfg.t_raw * cfg.n_units));

    Rng rng(mix64(cfg.seed, 2, static_cast<std::uint64_t>(trial)));
    std::vector<double> v(static_cast<std::size_t>(cfg.k_outputs), 0.0);
    for (Index t = 0; t < cfg.t_raw; ++t) {
      for (Index k = 0; k < cfg.k_outputs; ++k) {
        v[static_cast<std::size_t>(k)] =
            cfg.ar_coeff * v[static_cast<std::size_t>(k)] + innov * rng.normal();
        rec.label_seq[static_cast<std::size_t>(t * cfg.k_outputs + k)] = v[static_cast<std::size_t>(k)];
      }
      for (Index c = 0; c < cfg.n_units; ++c) {
        double drive = base[static_cast<std::size_t>(c)];
        for (Index k = 0; k < cfg.k_outputs; ++k)
          drive += cfg.gain_hz * dirs[static_cast<std::size_t>(c * cfg.k_outputs + k)] *
                   v[static_cast<std::size_t>(k)];
        const double lam = std::max(drive, 0.0) / cfg.sample_rate_hz;
        rec.counts[static_cast<std::size_t>(t * cfg.n_units + c)] = rng.poisson(lam);
      }
    }
    recs.push_back(std::move(rec));
  }
  return recs;
}

}  // namespace unibci
