#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "unibci/bytes.hpp"
#include "unibci/tensor.hpp"

namespace unibci {

// Ordered, named parameter list. Order is the registration order and defines
// the optimizer's and checkpoint's traversal order.
template <typename S>
class ParamStore {
 public:
  Index add(const std::string& name, Tensor<S> value) {
    if (by_name_.count(name)) fail(ErrorKind::contract, "params: duplicate name " + name);
    by_name_[name] = static_cast<Index>(values_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return static_cast<Index>(values_.size()) - 1;
  }
  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
  Index index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) fail(ErrorKind::contract, "params: unknown name " + name);
    return it->second;
  }
  Tensor<S>& value(Index i) { return values_[static_cast<std::size_t>(i)]; }
  const Tensor<S>& value(Index i) const { return values_[static_cast<std::size_t>(i)]; }
  Tensor<S>& operator[](const std::string& name) { return value(index_of(name)); }
  const Tensor<S>& operator[](const std::string& name) const { return value(index_of(name)); }
  const std::vector<std::string>& names() const { return names_; }
  Index size() const { return static_cast<Index>(values_.size()); }
  Index total_scalars() const {
    Index n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
  }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (Index i = 0; i < size(); ++i)
      out.add(names_[static_cast<std::size_t>(i)], values_[static_cast<std::size_t>(i)].template cast<T>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<S>> values_;
  std::map<std::string, Index> by_name_;
};

// Checkpoint container (little-endian):
//   "UBCK" | u16 version=1 | u32 json_len | config JSON
//   | u32 n_params | per param: u32 name_len | name | u32 rank | rank x u32
//     extents | numel f32 values
inline constexpr char kCheckpointMagic[4] = {'U', 'B', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<S>& params,
                                            const std::string& config_json) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(config_json.size()));
  w.str(config_json);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (Index i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[static_cast<std::size_t>(i)];
    const Tensor<S>& v = params.value(i);
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.str(name);
    w.u32(static_cast<std::uint32_t>(v.rank()));
    for (int r = 0; r < v.rank(); ++r) w.u32(static_cast<std::uint32_t>(v.extent(r)));
    for (Index j = 0; j < v.numel(); ++j) w.f32(static_cast<float>(v[j]));
  }
  return std::move(w.buf);
}

struct Checkpoint {
  ParamStore<float> params;
  std::string config_json;
};

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r{bytes};
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::format, "checkpoint: bad magic '" + magic + "'");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    fail(ErrorKind::version, "checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  const std::uint32_t json_len = r.u32();
  ck.config_json = r.str(json_len);
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) fail(ErrorKind::format, "checkpoint: bad rank for " + name);
    std::vector<Index> ext(rank);
    for (std::uint32_t k = 0; k < rank; ++k) ext[k] = static_cast<Index>(r.u32());
    Tensor<float> v{Shape(ext)};
    for (Index j = 0; j < v.numel(); ++j) v[j] = r.f32();
    ck.params.add(name, std::move(v));
  }
  if (!r.done()) fail(ErrorKind::length, "checkpoint: trailing bytes");
  return ck;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<S>& params,
                     const std::string& config_json) {
  const auto bytes = encode_checkpoint(params, config_json);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::validation, "checkpoint: cannot open for write: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::validation, "checkpoint: write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) fail(ErrorKind::validation, "checkpoint: cannot open: " + path.string());
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) fail(ErrorKind::validation, "checkpoint: read failed: " + path.string());
  return decode_checkpoint(bytes);
}

}  // namespace unibci
