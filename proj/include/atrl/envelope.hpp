#pragma once

// Binary file plumbing shared by checkpoint ("MODL"), factorization ("SPEC")
// and dataset ("SEQD") files. Everything is little-endian; floats are IEEE
// binary64 written byte-by-byte so files round-trip bit-exactly across hosts.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace atrl {

struct FormatError : std::runtime_error {
  enum class Kind { bad_magic, bad_version, truncated };
  Kind kind;
  FormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw std::runtime_error("io: write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(FormatError::Kind::truncated,
                      std::string("truncated file while reading ") + what);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 4);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is, const char* what) {
  std::uint64_t bits = read_u64(is, what);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

inline void write_f64s(std::ostream& os, const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) write_f64(os, p[i]);
}

inline void read_f64s(std::istream& is, double* p, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i) p[i] = read_f64(is, what);
}

inline void write_tag(std::ostream& os, const char tag[4]) { write_bytes(os, tag, 4); }

inline std::string read_tag(std::istream& is, const char* what) {
  char t[4];
  read_bytes(is, t, 4, what);
  return std::string(t, 4);
}

// Envelope header: magic "ATRL", format version, 4-byte section tag.
inline constexpr std::uint32_t kEnvelopeVersion = 1;

inline void write_envelope_header(std::ostream& os, const char section[4]) {
  write_tag(os, "ATRL");
  write_u32(os, kEnvelopeVersion);
  write_tag(os, section);
}

inline void read_envelope_header(std::istream& is, const char* section) {
  const std::string magic = read_tag(is, "magic");
  if (magic != "ATRL")
    throw FormatError(FormatError::Kind::bad_magic, "bad magic: expected ATRL, got \"" + magic + "\"");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kEnvelopeVersion)
    throw FormatError(FormatError::Kind::bad_version,
                      "unsupported format version " + std::to_string(version));
  const std::string tag = read_tag(is, "section");
  if (tag != section)
    throw FormatError(FormatError::Kind::bad_magic,
                      std::string("wrong section tag: expected ") + section + ", got \"" + tag + "\"");
}

}  // namespace io
}  // namespace atrl
