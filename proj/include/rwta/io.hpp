#pragma once

// Byte-level file plumbing shared by the dataset / checkpoint / transform
// formats. Integers and floats are written explicitly little-endian (IDX is
// the big-endian exception), so files are portable across hosts.

#include <bit>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rwta/errors.hpp"

namespace rwta::io {

// Incremental FNV-1a (64-bit) over raw bytes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update_str(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 14695981039346656037ULL;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* src, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void u32_be(std::uint32_t v);
  void pad_to(std::size_t offset);  // zero fill forward

  template <class T>
  void array(const T* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      if constexpr (sizeof(T) == 4)
        u32(std::bit_cast<std::uint32_t>(data[i]));
      else
        u64(std::bit_cast<std::uint64_t>(data[i]));
    }
  }

  std::size_t offset() const { return off_; }

 private:
  std::ostream& out_;
  std::size_t off_ = 0;
};

// Throws FormatError naming the field and the byte offset on truncation.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* dst, std::size_t n, const char* what);
  std::uint8_t u8(const char* what);
  std::uint32_t u32(const char* what);
  std::uint64_t u64(const char* what);
  std::int32_t i32(const char* what) {
    return static_cast<std::int32_t>(u32(what));
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::uint32_t u32_be(const char* what);
  void skip_to(std::size_t offset, const char* what);

  template <class T>
  void array(T* dst, std::size_t n, const char* what) {
    for (std::size_t i = 0; i < n; ++i) {
      if constexpr (sizeof(T) == 4)
        dst[i] = std::bit_cast<T>(u32(what));
      else
        dst[i] = std::bit_cast<T>(u64(what));
    }
  }

  std::size_t offset() const { return off_; }
  bool at_eof();

 private:
  std::istream& in_;
  std::size_t off_ = 0;
};

// Whole-file helpers; FormatError ("cannot open ...") on failure.
std::string slurp(const std::string& path);
void spit(const std::string& path, const std::string& bytes);

// Binary 8-bit grayscale PGM (P5). pixels is row major, height * width.
void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& pixels);

}  // namespace rwta::io
