#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unibci/common.hpp"
#include "unibci/metadata.hpp"

namespace unibci {

enum class LabelKind { none, class_index, sequence };

// One trial of raw spike counts plus its context and optional supervision.
struct SpikeRecording {
  Index t_raw = 0;  // raw temporal bins
  Index c_raw = 0;  // recorded units
  double sample_rate_hz = 0;
  MetadataRecord meta;
  std::vector<std::uint32_t> counts;  // t_raw x c_raw, row-major, time-major

  LabelKind label_kind = LabelKind::none;
  double class_label = 0;          // valid when label_kind == class_index
  Index label_dim = 0;             // k, valid when label_kind == sequence
  std::vector<double> label_seq;   // t_raw x k, row-major

  std::uint32_t count(Index t, Index c) const {
    return counts[static_cast<std::size_t>(t * c_raw + c)];
  }
  void validate() const;
};

// Binary container (little-endian throughout):
//   "SPKT" | u16 version=1 | u32 t_raw | u32 c_raw | f64 sample_rate_hz
//   | u32 json_len | metadata JSON (UTF-8)
//   | t_raw*c_raw u32 counts (row-major, time-major)
//   | if labeled: u32 n_values | n_values f64
// The metadata JSON carries species/dataset/subject/region/task/session and an
// optional "label" key; "class" means one f64, "seq" means t_raw*k f64 values.
std::vector<std::uint8_t> encode_spkt(const SpikeRecording& rec);
SpikeRecording decode_spkt(const std::vector<std::uint8_t>& bytes);

void write_spkt(const std::filesystem::path& path, const SpikeRecording& rec);
SpikeRecording read_spkt(const std::filesystem::path& path);

// A corpus directory holds trial files plus manifest.txt naming them in order.
void write_corpus(const std::filesystem::path& dir, const std::vector<SpikeRecording>& recs);
std::vector<SpikeRecording> read_corpus(const std::filesystem::path& dir);

}  // namespace unibci
