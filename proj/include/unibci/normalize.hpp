#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "unibci/rng.hpp"
#include "unibci/spike_io.hpp"

namespace unibci {

// Session-agnostic spike layout: fixed duration, fixed area count, fixed
// channels per area. values is [t_norm, n_areas, area_size] row-major;
// padded slots hold zero and have no entry in channel_map.
struct NormalizedSpikes {
  Index t_norm = 0;
  Index n_areas = 0;
  Index area_size = 0;
  std::vector<std::uint32_t> values;
  std::vector<std::vector<Index>> channel_map;  // per area: raw channels kept, in order
  std::vector<Index> bin_edges;                 // t_norm + 1 edges into raw time

  std::uint32_t at(Index t, Index a, Index c) const {
    return values[static_cast<std::size_t>((t * n_areas + a) * area_size + c)];
  }
};

// Bin t covers raw steps [floor(t*t_raw/t_norm), floor((t+1)*t_raw/t_norm)).
// Upsampling (t_raw < t_norm) would create empty bins and is rejected.
inline std::vector<Index> make_bin_edges(Index t_raw, Index t_norm) {
  if (t_norm < 1) fail(ErrorKind::validation, "normalize: t_norm must be >= 1");
  if (t_raw < t_norm)
    fail(ErrorKind::resolution, "normalize: t_raw " + std::to_string(t_raw) +
                                    " < t_norm " + std::to_string(t_norm));
  std::vector<Index> edges(static_cast<std::size_t>(t_norm) + 1);
  for (Index t = 0; t <= t_norm; ++t)
    edges[static_cast<std::size_t>(t)] = t * t_raw / t_norm;
  return edges;
}

// Sums raw counts into t_norm bins; exact (integer) count preservation.
inline std::vector<std::uint32_t> bin_temporal(const std::vector<std::uint32_t>& counts,
                                               Index t_raw, Index c_raw, Index t_norm) {
  const auto edges = make_bin_edges(t_raw, t_norm);
  std::vector<std::uint32_t> out(static_cast<std::size_t>(t_norm * c_raw), 0);
  for (Index t = 0; t < t_norm; ++t)
    for (Index c = 0; c < c_raw; ++c) {
      std::uint64_t acc = 0;
      for (Index tau = edges[static_cast<std::size_t>(t)];
           tau < edges[static_cast<std::size_t>(t) + 1]; ++tau)
        acc += counts[static_cast<std::size_t>(tau * c_raw + c)];
      if (acc > std::numeric_limits<std::uint32_t>::max())
        fail(ErrorKind::contract, "normalize: bin sum overflows u32");
      out[static_cast<std::size_t>(t * c_raw + c)] = static_cast<std::uint32_t>(acc);
    }
  return out;
}

// Contiguous grouping into n_areas groups: the first (c_raw mod n_areas)
// groups take one extra channel. Groups wider than area_size keep their
// lowest-index channels; narrower groups are zero-padded. The optional seed
// permutes raw channel order before grouping.
inline std::vector<std::vector<Index>> group_areas(
    Index c_raw, Index n_areas, Index area_size,
    std::optional<std::uint64_t> permute_seed = std::nullopt) {
  if (c_raw < 1 || n_areas < 1 || area_size < 1)
    fail(ErrorKind::validation, "normalize: c_raw, n_areas, area_size must be >= 1");
  std::vector<Index> order(static_cast<std::size_t>(c_raw));
  for (Index c = 0; c < c_raw; ++c) order[static_cast<std::size_t>(c)] = c;
  if (permute_seed) {
    Rng rng(*permute_seed);
    rng.shuffle(order);
  }
  const Index base = c_raw / n_areas;
  const Index extra = c_raw % n_areas;
  std::vector<std::vector<Index>> map(static_cast<std::size_t>(n_areas));
  Index pos = 0;
  for (Index a = 0; a < n_areas; ++a) {
    const Index width = base + (a < extra ? 1 : 0);
    const Index keep = std::min(width, area_size);
    auto& area = map[static_cast<std::size_t>(a)];
    area.reserve(static_cast<std::size_t>(keep));
    for (Index c = 0; c < keep; ++c) area.push_back(order[static_cast<std::size_t>(pos + c)]);
    pos += width;
  }
  return map;
}

inline NormalizedSpikes normalize(const SpikeRecording& rec, Index t_norm, Index n_areas,
                                  Index area_size,
                                  std::optional<std::uint64_t> permute_seed = std::nullopt) {
  rec.validate();
  NormalizedSpikes out;
  out.t_norm = t_norm;
  out.n_areas = n_areas;
  out.area_size = area_size;
  out.bin_edges = make_bin_edges(rec.t_raw, t_norm);
  out.channel_map = group_areas(rec.c_raw, n_areas, area_size, permute_seed);
  const auto binned = bin_temporal(rec.counts, rec.t_raw, rec.c_raw, t_norm);
  out.values.assign(static_cast<std::size_t>(t_norm * n_areas * area_size), 0);
  for (Index t = 0; t < t_norm; ++t)
    for (Index a = 0; a < n_areas; ++a) {
      const auto& area = out.channel_map[static_cast<std::size_t>(a)];
      for (std::size_t c = 0; c < area.size(); ++c)
        out.values[static_cast<std::size_t>((t * n_areas + a) * area_size) + c] =
            binned[static_cast<std::size_t>(t * rec.c_raw + area[c])];
    }
  return out;
}

// Bin means of a per-step label sequence, aligned with the spike bin edges.
inline std::vector<double> bin_label_sequence(const std::vector<double>& label_seq, Index t_raw,
                                              Index k, Index t_norm) {
  if (static_cast<Index>(label_seq.size()) != t_raw * k)
    fail(ErrorKind::dimension, "normalize: label length != t_raw*k");
  const auto edges = make_bin_edges(t_raw, t_norm);
  std::vector<double> out(static_cast<std::size_t>(t_norm * k), 0.0);
  for (Index t = 0; t < t_norm; ++t) {
    const Index lo = edges[static_cast<std::size_t>(t)];
    const Index hi = edges[static_cast<std::size_t>(t) + 1];
    for (Index j = 0; j < k; ++j) {
      double acc = 0;
      for (Index tau = lo; tau < hi; ++tau) acc += label_seq[static_cast<std::size_t>(tau * k + j)];
      out[static_cast<std::size_t>(t * k + j)] = acc / static_cast<double>(hi - lo);
    }
  }
  return out;
}

}  // namespace unibci
