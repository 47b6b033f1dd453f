#pragma once

#include <cstdint>
#include <string>

#include "hat/errors.hpp"
#include "hat/mat.hpp"

namespace hat {

// Little-endian primitives appended to a byte buffer.
void put_u16(std::string& buf, uint16_t v);
void put_u32(std::string& buf, uint32_t v);
void put_u64(std::string& buf, uint64_t v);
void put_f64(std::string& buf, double v);

// Bounds-checked little-endian reader. Every failure is a ParseError naming
// the source and the byte offset where the data ran out or went bad.
class ByteReader {
public:
  ByteReader(const std::string& data, std::string source)
      : data_(data), source_(std::move(source)) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  double f64();
  std::string bytes(size_t n);

  // Rejects trailing bytes after the declared payload.
  void expect_end() const;

  [[noreturn]] void fail(const std::string& what) const;

private:
  const uint8_t* need(size_t n);

  const std::string& data_;
  std::string source_;
  size_t pos_ = 0;
};

// Shortest decimal string that parses back to the same binary64 value.
std::string format_real(double v);

// Strict full-string parse; throws ParseError on anything else.
double parse_real(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

std::string read_file(const std::string& path);

// Writes via a temp file in the same directory, then renames over the target.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace hat
