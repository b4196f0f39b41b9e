#include "socialfl/hash.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace socialfl {

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.bytes.data(), &len,
                 EVP_sha256(), nullptr) != 1 ||
      len != out.bytes.size()) {
    throw std::runtime_error("sha256: digest computation failed");
  }
  return out;
}

Digest sha256(std::string_view data) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Digest keyed_mac(std::span<const std::uint8_t> key,
                 std::span<const std::uint8_t> msg) {
  std::vector<std::uint8_t> buf;
  buf.reserve(key.size() + 8 + msg.size());
  buf.insert(buf.end(), key.begin(), key.end());
  std::uint64_t n = msg.size();
  for (int i = 0; i < 8; ++i) buf.push_back((n >> (8 * i)) & 0xff);
  buf.insert(buf.end(), msg.begin(), msg.end());
  return sha256(buf);
}

std::string to_hex(const Digest& d) {
  return to_hex(std::span<const std::uint8_t>(d.bytes));
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Digest digest_from_hex(const std::string& hex) {
  if (hex.size() != 64)
    throw InvalidInputError("digest_from_hex: expected 64 hex chars, got " +
                            std::to_string(hex.size()));
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw InvalidInputError("digest_from_hex: invalid hex character");
  };
  Digest d;
  for (std::size_t i = 0; i < 32; ++i)
    d.bytes[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) |
                                           nibble(hex[2 * i + 1]));
  return d;
}

}  // namespace socialfl
