#include "socialfl/keys.hpp"

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"

namespace socialfl {

KeyRegistry KeyRegistry::generate(std::uint64_t seed,
                                  const std::vector<NodeId>& ids) {
  KeyRegistry reg;
  for (NodeId id : ids) reg.add(id, seed);
  return reg;
}

void KeyRegistry::add(NodeId id, std::uint64_t seed) {
  ByteWriter w;
  w.put_u64(seed);
  w.put_string("keys.secret");
  w.put_u32(id);
  secrets_[id] = sha256(w.bytes()).bytes;
}

const KeyRegistry::Secret& KeyRegistry::secret_of(NodeId id) const {
  auto it = secrets_.find(id);
  if (it == secrets_.end())
    throw KeyError("key registry: no secret for id " + std::to_string(id));
  return it->second;
}

std::vector<NodeId> KeyRegistry::ids() const {
  std::vector<NodeId> out;
  out.reserve(secrets_.size());
  for (const auto& [id, _] : secrets_) out.push_back(id);
  return out;
}

Digest KeyRegistry::sign(NodeId id, std::span<const std::uint8_t> msg) const {
  return keyed_mac(secret_of(id), msg);
}

bool KeyRegistry::verify(NodeId id, std::span<const std::uint8_t> msg,
                         const Digest& signature) const {
  return keyed_mac(secret_of(id), msg) == signature;
}

}  // namespace socialfl
