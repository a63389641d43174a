#pragma once

// Little-endian byte packing shared by the binary file formats (scene files
// and checkpoints). Internal to the library — not installed.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "ovpseg/errors.hpp"

namespace ovpseg {
namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_i32(std::string& out, std::int32_t v) {
  append_u32(out, static_cast<std::uint32_t>(v));
}

inline void append_f64(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  append_u64(out, bits);
}

// Cursor over a loaded file; every read checks the remaining byte count and
// reports the offset where parsing stopped.
class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  bool done() const { return pos_ == data_.size(); }

  void need(std::uint64_t bytes, const std::string& what) const {
    if (bytes > data_.size() - pos_)
      throw ParseError("unexpected end of file while reading " + what, pos_);
  }

  // Bounds check for `count` records of `bytes_each` before any allocation,
  // so a corrupt count fails here instead of in operator new.
  void need_counted(std::uint64_t count, std::uint64_t bytes_each,
                    const std::string& what) const {
    const std::uint64_t remaining = data_.size() - pos_;
    if (bytes_each != 0 && count > remaining / bytes_each)
      throw ParseError("unexpected end of file while reading " + what, pos_);
  }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + std::size_t(i)]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + std::size_t(i)]))
           << (8 * i);
    pos_ += 8;
    return v;
  }

  std::int32_t i32(const std::string& what) {
    return static_cast<std::int32_t>(u32(what));
  }

  double f64(const std::string& what) {
    const std::uint64_t bits = u64(what);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string tag4(const std::string& what) {
    need(4, what);
    std::string t = data_.substr(pos_, 4);
    pos_ += 4;
    return t;
  }

  std::string bytes(std::uint64_t n, const std::string& what) {
    need(n, what);
    std::string s = data_.substr(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }

  void skip(std::uint64_t n, const std::string& what) {
    need(n, what);
    pos_ += static_cast<std::size_t>(n);
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return std::move(ss).str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace detail
}  // namespace ovpseg
