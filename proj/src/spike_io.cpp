#include "unibci/spike_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "unibci/bytes.hpp"

namespace unibci {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'T'};
constexpr std::uint16_t kVersion = 1;

std::string label_kind_str(LabelKind k) {
  switch (k) {
    case LabelKind::none: return "none";
    case LabelKind::class_index: return "class";
    case LabelKind::sequence: return "seq";
  }
  return "none";
}

}  // namespace

void SpikeRecording::validate() const {
  if (t_raw < 1 || c_raw < 1)
    fail(ErrorKind::validation, "recording: t_raw and c_raw must be positive");
  if (static_cast<Index>(counts.size()) != t_raw * c_raw)
    fail(ErrorKind::validation, "recording: counts length != t_raw*c_raw");
  if (!(sample_rate_hz > 0))
    fail(ErrorKind::validation, "recording: sample_rate_hz must be positive");
  if (label_kind == LabelKind::sequence) {
    if (label_dim < 1) fail(ErrorKind::validation, "recording: sequence label needs k >= 1");
    if (static_cast<Index>(label_seq.size()) != t_raw * label_dim)
      fail(ErrorKind::validation, "recording: label length != t_raw*k");
  }
  (void)render_context(meta);  // rejects empty metadata fields
}

std::vector<std::uint8_t> encode_spkt(const SpikeRecording& rec) {
  rec.validate();
  nlohmann::ordered_json j;
  j["species"] = rec.meta.species;
  j["dataset"] = rec.meta.dataset;
  j["subject"] = rec.meta.subject;
  j["region"] = rec.meta.region;
  j["task"] = rec.meta.task;
  j["session"] = rec.meta.session;
  j["label"] = label_kind_str(rec.label_kind);
  const std::string meta = j.dump();

  ByteWriter w;
  w.buf.reserve(26 + meta.size() + rec.counts.size() * 4 + rec.label_seq.size() * 8 + 12);
  w.raw(kMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(rec.t_raw));
  w.u32(static_cast<std::uint32_t>(rec.c_raw));
  w.f64(rec.sample_rate_hz);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.str(meta);
  for (std::uint32_t c : rec.counts) w.u32(c);
  if (rec.label_kind == LabelKind::class_index) {
    w.u32(1);
    w.f64(rec.class_label);
  } else if (rec.label_kind == LabelKind::sequence) {
    w.u32(static_cast<std::uint32_t>(rec.label_seq.size()));
    for (double v : rec.label_seq) w.f64(v);
  }
  return std::move(w.buf);
}

SpikeRecording decode_spkt(const std::vector<std::uint8_t>& bytes) {
  ByteReader r{bytes};
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    fail(ErrorKind::format, "spkt: bad magic '" + magic + "'");
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    fail(ErrorKind::version, "spkt: unsupported version " + std::to_string(version));

  SpikeRecording rec;
  rec.t_raw = r.u32();
  rec.c_raw = r.u32();
  rec.sample_rate_hz = r.f64();
  const std::uint32_t json_len = r.u32();
  const std::string meta_json = r.str(json_len);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("spkt: metadata JSON unparsable: ") + e.what());
  }
  auto want = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string())
      fail(ErrorKind::format, std::string("spkt: metadata missing string key '") + key + "'");
    return j[key].get<std::string>();
  };
  rec.meta.species = want("species");
  rec.meta.dataset = want("dataset");
  rec.meta.subject = want("subject");
  rec.meta.region = want("region");
  rec.meta.task = want("task");
  rec.meta.session = want("session");
  std::string label = "none";
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "species" || k == "dataset" || k == "subject" || k == "region" || k == "task" ||
        k == "session")
      continue;
    if (k == "label") {
      if (!it.value().is_string()) fail(ErrorKind::format, "spkt: label key must be a string");
      label = it.value().get<std::string>();
      continue;
    }
    fail(ErrorKind::format, "spkt: unknown metadata key '" + k + "'");
  }

  if (rec.t_raw < 1 || rec.c_raw < 1)
    fail(ErrorKind::format, "spkt: non-positive extents in header");
  const std::size_t n = static_cast<std::size_t>(rec.t_raw) * static_cast<std::size_t>(rec.c_raw);
  rec.counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) rec.counts[i] = r.u32();

  if (label == "none") {
    rec.label_kind = LabelKind::none;
  } else if (label == "class") {
    rec.label_kind = LabelKind::class_index;
    const std::uint32_t nvals = r.u32();
    if (nvals != 1) fail(ErrorKind::length, "spkt: class label payload must hold 1 value");
    rec.class_label = r.f64();
  } else if (label == "seq") {
    rec.label_kind = LabelKind::sequence;
    const std::uint32_t nvals = r.u32();
    if (nvals == 0 || nvals % static_cast<std::uint32_t>(rec.t_raw) != 0)
      fail(ErrorKind::length, "spkt: sequence label payload must be t_raw*k values");
    rec.label_dim = static_cast<Index>(nvals) / rec.t_raw;
    rec.label_seq.resize(nvals);
    for (std::uint32_t i = 0; i < nvals; ++i) rec.label_seq[i] = r.f64();
  } else {
    fail(ErrorKind::format, "spkt: unknown label kind '" + label + "'");
  }

  if (r.pos != bytes.size())
    fail(ErrorKind::length, "spkt: " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
  rec.validate();
  return rec;
}

void write_spkt(const std::filesystem::path& path, const SpikeRecording& rec) {
  const auto bytes = encode_spkt(rec);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::validation, "spkt: cannot open for write: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::validation, "spkt: write failed: " + path.string());
}

SpikeRecording read_spkt(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) fail(ErrorKind::validation, "spkt: cannot open: " + path.string());
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) fail(ErrorKind::validation, "spkt: read failed: " + path.string());
  return decode_spkt(bytes);
}

void write_corpus(const std::filesystem::path& dir, const std::vector<SpikeRecording>& recs) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) fail(ErrorKind::validation, "corpus: cannot write manifest in " + dir.string());
  char name[32];
  for (std::size_t i = 0; i < recs.size(); ++i) {
    std::snprintf(name, sizeof(name), "trial_%05zu.spkt", i);
    write_spkt(dir / name, recs[i]);
    manifest << name << "\n";
  }
}

std::vector<SpikeRecording> read_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) fail(ErrorKind::validation, "corpus: missing manifest.txt in " + dir.string());
  std::vector<SpikeRecording> recs;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    recs.push_back(read_spkt(dir / line));
  }
  return recs;
}

}  // namespace unibci
