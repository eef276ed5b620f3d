#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace shredql {

struct SourcePos {
  int line = 0;
  int col = 0;
  bool valid() const { return line > 0; }
  std::string str() const {
    return valid() ? std::to_string(line) + ":" + std::to_string(col) : "?";
  }
};

/// All library errors carry a stable machine-readable code (e.g. "SyntaxError",
/// "TypeMismatch", "UnsupportedPattern") plus an optional source position.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg, SourcePos pos = {})
      : std::runtime_error(pos.valid() ? pos.str() + ": " + msg : msg),
        code_(std::move(code)),
        pos_(pos) {}

  const std::string& code() const { return code_; }
  SourcePos pos() const { return pos_; }

 private:
  std::string code_;
  SourcePos pos_;
};

[[noreturn]] inline void fail(std::string code, const std::string& msg,
                              SourcePos pos = {}) {
  throw Error(std::move(code), msg, pos);
}

// Seeded 64-bit mixer (splitmix64 finalizer); the executor's hash partitioner
// and all value hashing go through this so runs are reproducible per seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hashCombine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

}  // namespace shredql
