#include "rwta/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rwta::io {

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 1099511628211ULL;
  }
}

void Writer::bytes(const void* src, std::size_t n) {
  out_.write(static_cast<const char*>(src), std::streamsize(n));
  if (!out_) throw FormatError("write failed at byte " + std::to_string(off_));
  off_ += n;
}

void Writer::u32(std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  bytes(b, 4);
}

void Writer::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v));
  u32(static_cast<std::uint32_t>(v >> 32));
}

void Writer::u32_be(std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  bytes(b, 4);
}

void Writer::pad_to(std::size_t offset) {
  if (offset < off_)
    throw FormatError("pad_to moving backwards from byte " + std::to_string(off_));
  static const char zeros[16] = {};
  while (off_ < offset) {
    std::size_t n = std::min<std::size_t>(16, offset - off_);
    bytes(zeros, n);
  }
}

void Reader::bytes(void* dst, std::size_t n, const char* what) {
  in_.read(static_cast<char*>(dst), std::streamsize(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw FormatError(std::string("truncated file: reading ") + what + " at byte " +
                      std::to_string(off_));
  off_ += n;
}

std::uint8_t Reader::u8(const char* what) {
  std::uint8_t v;
  bytes(&v, 1, what);
  return v;
}

std::uint32_t Reader::u32(const char* what) {
  unsigned char b[4];
  bytes(b, 4, what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::uint64_t Reader::u64(const char* what) {
  std::uint64_t lo = u32(what);
  std::uint64_t hi = u32(what);
  return lo | hi << 32;
}

std::uint32_t Reader::u32_be(const char* what) {
  unsigned char b[4];
  bytes(b, 4, what);
  return std::uint32_t(b[0]) << 24 | std::uint32_t(b[1]) << 16 | std::uint32_t(b[2]) << 8 |
         std::uint32_t(b[3]);
}

void Reader::skip_to(std::size_t offset, const char* what) {
  if (offset < off_)
    throw FormatError(std::string("bad offset for ") + what + ": " +
                      std::to_string(offset) + " is before byte " + std::to_string(off_));
  char scratch[64];
  while (off_ < offset) {
    std::size_t n = std::min<std::size_t>(sizeof scratch, offset - off_);
    bytes(scratch, n, what);
  }
}

bool Reader::at_eof() {
  return in_.peek() == std::char_traits<char>::eof();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& pixels) {
  if (height < 1 || width < 1 || pixels.size() != std::size_t(height) * width)
    throw ContractError("write_pgm: " + std::to_string(pixels.size()) + " pixels for " +
                        std::to_string(width) + "x" + std::to_string(height));
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  spit(path, out);
}

}  // namespace rwta::io
