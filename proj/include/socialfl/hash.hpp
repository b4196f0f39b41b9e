#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "socialfl/common.hpp"

namespace socialfl {

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

// Deterministic keyed MAC used as the simulator's signature scheme:
// MAC(key, msg) = SHA-256(key || u64le(|msg|) || msg).  The simulator owns
// every key, so verification is recomputation.
Digest keyed_mac(std::span<const std::uint8_t> key,
                 std::span<const std::uint8_t> msg);

}  // namespace socialfl
