#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace plcbinx {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class ErrorKind {
  MalformedHeader,
  UnsupportedClass,
  UnsupportedMachine,
  NoPeers,
  NoCodeFound,
  UnalignedRegion,
  DanglingEntry,
  SchemaViolation,
  NoSeedFound,
  NoRuntimeFunctions,
  EmptyTrainingFold,
  SingleClassTraining,
  NoFunctionsSelected,
  LengthMismatch,
  EncodingOverflow,
  InvariantViolation,
  Io,
  Usage,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::UnsupportedClass: return "UnsupportedClass";
    case ErrorKind::UnsupportedMachine: return "UnsupportedMachine";
    case ErrorKind::NoPeers: return "NoPeers";
    case ErrorKind::NoCodeFound: return "NoCodeFound";
    case ErrorKind::UnalignedRegion: return "UnalignedRegion";
    case ErrorKind::DanglingEntry: return "DanglingEntry";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::NoSeedFound: return "NoSeedFound";
    case ErrorKind::NoRuntimeFunctions: return "NoRuntimeFunctions";
    case ErrorKind::EmptyTrainingFold: return "EmptyTrainingFold";
    case ErrorKind::SingleClassTraining: return "SingleClassTraining";
    case ErrorKind::NoFunctionsSelected: return "NoFunctionsSelected";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EncodingOverflow: return "EncodingOverflow";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// FNV-1a 64-bit. Used for function hashes, vocabulary hashing and fold
// assignment, so the constants must never change.
inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffsetBasis) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(ByteView b, std::uint64_t h = kFnvOffsetBasis) {
  for (std::uint8_t c : b) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

// Bounds-checked little-endian reads; out-of-range reads throw MalformedHeader.
class LeReader {
 public:
  explicit LeReader(ByteView data) : data_(data) {}

  std::size_t size() const { return data_.size(); }
  bool has(std::uint64_t off, std::uint64_t n) const {
    return off <= data_.size() && n <= data_.size() - off;
  }

  std::uint8_t u8(std::uint64_t off) const {
    need(off, 1);
    return data_[off];
  }
  std::uint16_t u16(std::uint64_t off) const {
    need(off, 2);
    return static_cast<std::uint16_t>(data_[off] | (data_[off + 1] << 8));
  }
  std::uint32_t u32(std::uint64_t off) const {
    need(off, 4);
    return static_cast<std::uint32_t>(data_[off]) |
           (static_cast<std::uint32_t>(data_[off + 1]) << 8) |
           (static_cast<std::uint32_t>(data_[off + 2]) << 16) |
           (static_cast<std::uint32_t>(data_[off + 3]) << 24);
  }
  std::string cstr(std::uint64_t off, std::size_t max_len = 4096) const {
    need(off, 1);
    std::string out;
    for (std::uint64_t i = off; i < data_.size() && out.size() < max_len; ++i) {
      if (data_[i] == 0) return out;
      out.push_back(static_cast<char>(data_[i]));
    }
    throw Error(ErrorKind::MalformedHeader, "unterminated string at offset " + std::to_string(off));
  }

 private:
  void need(std::uint64_t off, std::uint64_t n) const {
    if (!has(off, n))
      throw Error(ErrorKind::MalformedHeader,
                  "read of " + std::to_string(n) + " bytes at offset " + std::to_string(off) +
                      " past end (" + std::to_string(data_.size()) + ")");
  }
  ByteView data_;
};

class LeWriter {
 public:
  Bytes& bytes() { return out_; }
  std::size_t size() const { return out_.size(); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(v & 0xff);
    u8(v >> 8);
  }
  void u32(std::uint32_t v) {
    u16(v & 0xffff);
    u16(v >> 16);
  }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(std::string_view s, bool nul = true) {
    out_.insert(out_.end(), s.begin(), s.end());
    if (nul) out_.push_back(0);
  }
  void pad_to(std::size_t n, std::uint8_t fill = 0) {
    if (out_.size() < n) out_.resize(n, fill);
  }
  void align(std::size_t a, std::uint8_t fill = 0) { pad_to((out_.size() + a - 1) / a * a, fill); }
  void put_u32(std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.at(off + i) = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void put_u16(std::size_t off, std::uint16_t v) {
    out_.at(off) = v & 0xff;
    out_.at(off + 1) = v >> 8;
  }

 private:
  Bytes out_;
};

inline std::string hex8(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llX", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string hex_lower(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(v));
  return buf;
}

// Seeded generator with portable derived draws (no std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(gen_() % n); }
  bool chance(double p) { return uniform() < p; }
  // Inclusive integer range.
  std::uint32_t between(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(below(std::size_t{hi} - lo + 1));
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace plcbinx
