#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "unibci/rng.hpp"

namespace unibci {

// Frozen sentence encoder. Implementations carry no trainable parameters;
// nothing in the model's parameter store ever points back here.
class ContextEmbedder {
 public:
  virtual ~ContextEmbedder() = default;
  virtual Index dim() const = 0;
  virtual std::vector<double> embed(const std::string& sentence) const = 0;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Deterministic stand-in encoder: hash the sentence, draw a Gaussian vector,
// normalize to unit length. Equal sentences map to equal vectors; distinct
// sentences are near-orthogonal at realistic dims.
class StubEmbedder final : public ContextEmbedder {
 public:
  explicit StubEmbedder(Index dim = 384) : dim_(dim) {
    if (dim < 1) fail(ErrorKind::validation, "embedder: dim must be >= 1");
  }
  Index dim() const override { return dim_; }
  std::vector<double> embed(const std::string& sentence) const override {
    Rng rng(fnv1a64(sentence));
    std::vector<double> v(static_cast<std::size_t>(dim_));
    double norm = 0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0) norm = 1;
    for (auto& x : v) x /= norm;
    return v;
  }

 private:
  Index dim_;
};

// Precomputed table: a JSON object mapping sentence -> array of floats, for
// plugging in embeddings produced offline by a real text encoder.
class FileEmbedder final : public ContextEmbedder {
 public:
  explicit FileEmbedder(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::validation, "embedder: cannot open table " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, std::string("embedder: table JSON unparsable: ") + e.what());
    }
    if (!j.is_object() || j.empty())
      fail(ErrorKind::format, "embedder: table must be a non-empty object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.value().is_array())
        fail(ErrorKind::format, "embedder: entry for '" + it.key() + "' is not an array");
      std::vector<double> v = it.value().get<std::vector<double>>();
      if (dim_ == 0) dim_ = static_cast<Index>(v.size());
      if (static_cast<Index>(v.size()) != dim_ || dim_ < 1)
        fail(ErrorKind::format, "embedder: inconsistent vector width for '" + it.key() + "'");
      table_[it.key()] = std::move(v);
    }
  }
  Index dim() const override { return dim_; }
  std::vector<double> embed(const std::string& sentence) const override {
    auto it = table_.find(sentence);
    if (it == table_.end())
      fail(ErrorKind::validation, "embedder: no table entry for sentence: " + sentence);
    return it->second;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
  Index dim_ = 0;
};

}  // namespace unibci
