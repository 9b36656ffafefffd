#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace unibci {

using Index = std::int64_t;

// Every failure mode the library promises to detect gets a kind, so tests
// and the CLI can tell validation problems from numeric-contract breaks.
enum class ErrorKind {
  dimension,        // shape/rank mismatch between operands
  contract,         // API precondition broken (non-scalar loss, empty mask, ...)
  degenerate,       // numerically meaningless input (all -inf row, constant y_true)
  format,           // bad magic or malformed container payload
  version,          // unsupported container version
  length,           // payload shorter/longer than the header promises
  validation,       // bad user-facing value (empty metadata field, bad config key)
  resolution,       // temporal upsampling requested (T_raw < T_norm)
  partition,        // interval size does not divide the normalized duration
  infeasible_split, // split cannot be realized (e.g. single session, cross-day)
  generation,       // synthetic generator misuse (negative rate, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

// splitmix64 finalizer; used to derive independent stream seeds so that
// per-trial randomness does not depend on processing order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b), c);
}

}  // namespace unibci
