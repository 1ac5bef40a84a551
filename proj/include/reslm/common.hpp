#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace reslm {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/vector shape incompatibility; message names the op and shapes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Structured parse failure with a 1-based line number (0 = not line-specific).
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 for the raw stream, with hand-rolled mappings to doubles and
// bounded ints so draws are bit-identical across standard libraries.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(split_mix(seed)) {}

  uint64_t next_u64() {
    // xorshift* keeps the implementation self-contained and portable.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  static uint64_t split_mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return (z ^ (z >> 31)) | 1ULL;  // xorshift state must be nonzero
  }

  uint64_t state_;
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a), used for config hashes, vocab identity, model hashes.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(uint64_t v);

/// Stable 64-bit mix of a seed and a salt, for deriving sub-stream seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t h = fnv1a64(&seed, sizeof(seed));
  return fnv1a64(&salt, sizeof(salt), h);
}

inline uint64_t mix_seed(uint64_t seed, const std::string& salt) {
  uint64_t h = fnv1a64(&seed, sizeof(seed));
  return fnv1a64(salt, h);
}

// ---------------------------------------------------------------------------
// Little-endian binary IO for versioned model files.
// ---------------------------------------------------------------------------

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  void write_bytes(const void* data, size_t len);
  void write_u32(uint32_t v);
  void write_u64(uint64_t v);
  void write_f64(double v);
  void write_string(const std::string& s);  // u64 length + bytes

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}
  void read_bytes(void* data, size_t len);
  uint32_t read_u32();
  uint64_t read_u64();
  double read_f64();
  std::string read_string();

 private:
  std::istream& in_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace reslm
