#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "socialfl/common.hpp"

namespace socialfl {

using NodeId = std::uint32_t;

// The simulator is its own PKI: it generates and holds every party's secret,
// signatures are deterministic keyed MACs under the party's secret, and
// verification recomputes the MAC from this registry.
class KeyRegistry {
 public:
  using Secret = std::array<std::uint8_t, 32>;

  // Deterministically derives one secret per id from `seed`.
  static KeyRegistry generate(std::uint64_t seed,
                              const std::vector<NodeId>& ids);

  void add(NodeId id, std::uint64_t seed);
  bool has(NodeId id) const { return secrets_.contains(id); }
  const Secret& secret_of(NodeId id) const;
  std::vector<NodeId> ids() const;

  Digest sign(NodeId id, std::span<const std::uint8_t> msg) const;
  bool verify(NodeId id, std::span<const std::uint8_t> msg,
              const Digest& signature) const;

 private:
  std::map<NodeId, Secret> secrets_;
};

}  // namespace socialfl
