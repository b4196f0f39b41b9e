#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "socialfl/common.hpp"

namespace socialfl {

// Canonical byte encoding shared by hashing, signing, and persistence.
// Integers are fixed-width little-endian; doubles are IEEE-754 bit patterns
// in little-endian byte order; variable-length fields carry a u32 length
// prefix.  Fields are always written in declared struct order, so encoding
// is injective per type.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }

  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }

  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }

  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

  void put_digest(const Digest& d) {
    buf_.insert(buf_.end(), d.bytes.begin(), d.bytes.end());
  }

  // Length-prefixed raw bytes.
  void put_bytes(std::span<const std::uint8_t> data) {
    put_u32(static_cast<std::uint32_t>(data.size()));
    buf_.insert(buf_.end(), data.begin(), data.end());
  }

  void put_string(std::string_view s) {
    put_bytes(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_++]) << (8 * i);
    return v;
  }

  double get_f64() { return std::bit_cast<double>(get_u64()); }

  Digest get_digest() {
    need(32);
    Digest d;
    std::memcpy(d.bytes.data(), data_.data() + pos_, 32);
    pos_ += 32;
    return d;
  }

  std::vector<std::uint8_t> get_bytes() {
    std::uint32_t n = get_u32();
    need(n);
    std::vector<std::uint8_t> out(data_.begin() + pos_,
                                  data_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }

  std::string get_string() {
    auto raw = get_bytes();
    return std::string(raw.begin(), raw.end());
  }

  bool at_end() const { return pos_ == data_.size(); }

  void expect_end() const {
    if (!at_end())
      throw InvalidInputError("decode: trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size())
      throw InvalidInputError("decode: truncated input");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace socialfl
