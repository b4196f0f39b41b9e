#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace socialfl {

inline constexpr const char* kVersion = "socialfl 0.1.0";

// 32-byte SHA-256 digest.  Also used as content address, signature (keyed
// MAC), and hashchain link throughout the simulator.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }
};

// All-zero digest, used as the "no pointer" sentinel in block headers and
// transactions.
inline constexpr Digest kNullDigest{};

std::string to_hex(const Digest& d);
std::string to_hex(std::span<const std::uint8_t> data);
Digest digest_from_hex(const std::string& hex);

// Error hierarchy.  Every precondition violation surfaces as (a subclass of)
// InvalidInputError so callers can catch one type at the CLI boundary.
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotFoundError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

struct KeyError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

struct IncompleteMultisigError : KeyError {
  using KeyError::KeyError;
};

struct ExhaustedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoElectableNodesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RejectedVoteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmbeddingFailedError : std::runtime_error {
  EmbeddingFailedError(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_accuracy(achieved) {}
  double achieved_accuracy;
};

struct UnknownClientError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

struct IncompleteRegistryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

}  // namespace socialfl
