#pragma once

// Internal little-endian byte packing shared by the binary file formats.

#include <cstdint>
#include <cstring>
#include <string>

#include "emocomp/error.hpp"

namespace emocomp::bytes {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& data, std::string name)
      : data_(data), name_(std::move(name)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(p[i]);
    }
    return v;
  }

  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(p[i]);
    }
    return v;
  }

  float f32() {
    const std::uint32_t b = u32();
    float v;
    std::memcpy(&v, &b, 4);
    return v;
  }

  void magic(const char expect[4], const char* what) {
    const char* p = take(4);
    if (std::memcmp(p, expect, 4) != 0) {
      throw DataError(name_ + ": bad magic for " + what);
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }

  void expect_end(const char* what) {
    if (remaining() != 0) {
      throw DataError(name_ + ": trailing bytes after " + what);
    }
  }

  const std::string& name() const { return name_; }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw DataError(name_ + ": truncated file");
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  const std::string& data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace emocomp::bytes
