#include "socialfl/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"

namespace socialfl::ledger {

namespace {

void write_trtx(ByteWriter& w, const TrTx& tx, bool with_signatures) {
  w.put_u8(static_cast<std::uint8_t>(TxKind::tr));
  w.put_u64(tx.task_id);
  w.put_f64(tx.timestamp);
  w.put_u32(tx.requester);
  w.put_f64(tx.task_reward);
  w.put_digest(tx.initial_model_ptr);
  w.put_f64(tx.expected_performance);
  w.put_digest(with_signatures ? tx.signature : kNullDigest);
}

void write_satx(ByteWriter& w, const SaTx& tx, bool with_signatures) {
  w.put_u8(static_cast<std::uint8_t>(TxKind::sa));
  w.put_u64(tx.task_id);
  w.put_u32(static_cast<std::uint32_t>(tx.members.size()));
  for (NodeId m : tx.members) w.put_u32(m);
  w.put_digest(tx.aggregate_ptr);
  w.put_u32(static_cast<std::uint32_t>(tx.contributions.size()));
  for (double c : tx.contributions) w.put_f64(c);
  if (with_signatures) {
    w.put_u32(static_cast<std::uint32_t>(tx.signatures.size()));
    for (const Digest& s : tx.signatures) w.put_digest(s);
  } else {
    // The signing payload reserves one zeroed slot per member so signing
    // (no signatures yet) and verification (all attached) hash the same
    // bytes.
    w.put_u32(static_cast<std::uint32_t>(tx.members.size()));
    for (std::size_t i = 0; i < tx.members.size(); ++i)
      w.put_digest(kNullDigest);
  }
}

void write_gatx(ByteWriter& w, const GaTx& tx, bool with_signatures) {
  w.put_u8(static_cast<std::uint8_t>(TxKind::ga));
  w.put_u64(tx.task_id);
  w.put_u64(tx.round);
  w.put_digest(tx.global_ptr);
  w.put_u32(tx.aggregator);
  w.put_digest(with_signatures ? tx.signature : kNullDigest);
}

void write_pvtx(ByteWriter& w, const PvTx& tx, bool with_signatures) {
  w.put_u8(static_cast<std::uint8_t>(TxKind::pv));
  w.put_u64(tx.task_id);
  w.put_digest(tx.verdict_ptr);
  w.put_u32(tx.submitter);
  w.put_digest(with_signatures ? tx.signature : kNullDigest);
}

std::vector<std::uint8_t> encode_tx(const Transaction& tx,
                                    bool with_signatures) {
  ByteWriter w;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TrTx>)
          write_trtx(w, t, with_signatures);
        else if constexpr (std::is_same_v<T, SaTx>)
          write_satx(w, t, with_signatures);
        else if constexpr (std::is_same_v<T, GaTx>)
          write_gatx(w, t, with_signatures);
        else
          write_pvtx(w, t, with_signatures);
      },
      tx);
  return w.take();
}

// The SaTx multi-signature is an ordered list of per-member signatures; each
// member signs the common signing bytes under its own key.
void check_satx_shape(const SaTx& tx) {
  if (tx.members.empty())
    throw InvalidInputError("saTx: member list must be non-empty");
  if (tx.contributions.size() != tx.members.size())
    throw InvalidInputError("saTx: contributions must parallel members");
  if (!std::is_sorted(tx.members.begin(), tx.members.end()) ||
      std::adjacent_find(tx.members.begin(), tx.members.end()) !=
          tx.members.end())
    throw InvalidInputError("saTx: members must be ascending and distinct");
  for (double c : tx.contributions)
    if (!(c > 0.0))
      throw InvalidInputError("saTx: contributions must be > 0");
}

}  // namespace

TxKind kind_of(const Transaction& tx) {
  return static_cast<TxKind>(tx.index());
}

std::string kind_name(TxKind kind) {
  switch (kind) {
    case TxKind::tr: return "tr";
    case TxKind::sa: return "sa";
    case TxKind::ga: return "ga";
    case TxKind::pv: return "pv";
  }
  return "?";
}

std::vector<std::uint8_t> tx_bytes(const Transaction& tx) {
  return encode_tx(tx, true);
}

std::vector<std::uint8_t> tx_signing_bytes(const Transaction& tx) {
  return encode_tx(tx, false);
}

Digest tx_hash(const Transaction& tx) { return sha256(tx_bytes(tx)); }

Transaction tx_from_bytes(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  auto kind = r.get_u8();
  Transaction tx;
  switch (static_cast<TxKind>(kind)) {
    case TxKind::tr: {
      TrTx t;
      t.task_id = r.get_u64();
      t.timestamp = r.get_f64();
      t.requester = r.get_u32();
      t.task_reward = r.get_f64();
      t.initial_model_ptr = r.get_digest();
      t.expected_performance = r.get_f64();
      t.signature = r.get_digest();
      tx = t;
      break;
    }
    case TxKind::sa: {
      SaTx t;
      t.task_id = r.get_u64();
      auto n = r.get_u32();
      for (std::uint32_t i = 0; i < n; ++i) t.members.push_back(r.get_u32());
      t.aggregate_ptr = r.get_digest();
      auto nc = r.get_u32();
      for (std::uint32_t i = 0; i < nc; ++i)
        t.contributions.push_back(r.get_f64());
      auto ns = r.get_u32();
      for (std::uint32_t i = 0; i < ns; ++i)
        t.signatures.push_back(r.get_digest());
      tx = t;
      break;
    }
    case TxKind::ga: {
      GaTx t;
      t.task_id = r.get_u64();
      t.round = r.get_u64();
      t.global_ptr = r.get_digest();
      t.aggregator = r.get_u32();
      t.signature = r.get_digest();
      tx = t;
      break;
    }
    case TxKind::pv: {
      PvTx t;
      t.task_id = r.get_u64();
      t.verdict_ptr = r.get_digest();
      t.submitter = r.get_u32();
      t.signature = r.get_digest();
      tx = t;
      break;
    }
    default:
      throw InvalidInputError("tx decode: unknown kind byte " +
                              std::to_string(kind));
  }
  r.expect_end();
  return tx;
}

TrTx make_trtx(TaskId task_id, double timestamp, NodeId requester,
               double task_reward, const Digest& initial_model_ptr,
               double expected_performance, const KeyRegistry& keys) {
  if (!(expected_performance > 0.0) || expected_performance > 1.0)
    throw InvalidInputError("trTx: expected_performance must be in (0,1]");
  TrTx tx{task_id,           timestamp,
          requester,         task_reward,
          initial_model_ptr, expected_performance,
          kNullDigest};
  tx.signature = keys.sign(requester, tx_signing_bytes(tx));
  return tx;
}

SaTx make_satx(TaskId task_id, std::vector<NodeId> members,
               const Digest& aggregate_ptr, std::vector<double> contributions,
               const KeyRegistry& keys) {
  SaTx tx{task_id, std::move(members), aggregate_ptr, std::move(contributions),
          {}};
  check_satx_shape(tx);
  auto payload = tx_signing_bytes(tx);
  for (NodeId m : tx.members) {
    if (!keys.has(m))
      throw IncompleteMultisigError("saTx: missing key for member " +
                                    std::to_string(m));
    tx.signatures.push_back(keys.sign(m, payload));
  }
  return tx;
}

GaTx make_gatx(TaskId task_id, std::uint64_t round, const Digest& global_ptr,
               NodeId aggregator, const KeyRegistry& keys) {
  GaTx tx{task_id, round, global_ptr, aggregator, kNullDigest};
  tx.signature = keys.sign(aggregator, tx_signing_bytes(tx));
  return tx;
}

PvTx make_pvtx(TaskId task_id, const Digest& verdict_ptr, NodeId submitter,
               const KeyRegistry& keys) {
  PvTx tx{task_id, verdict_ptr, submitter, kNullDigest};
  tx.signature = keys.sign(submitter, tx_signing_bytes(tx));
  return tx;
}

bool verify_tx(const Transaction& tx, const KeyRegistry& keys) {
  auto payload = tx_signing_bytes(tx);
  try {
    if (const auto* tr = std::get_if<TrTx>(&tx)) {
      if (!(tr->expected_performance > 0.0) || tr->expected_performance > 1.0)
        return false;
      return keys.verify(tr->requester, payload, tr->signature);
    }
    if (const auto* sa = std::get_if<SaTx>(&tx)) {
      check_satx_shape(*sa);
      if (sa->signatures.size() != sa->members.size()) return false;
      for (std::size_t i = 0; i < sa->members.size(); ++i)
        if (!keys.verify(sa->members[i], payload, sa->signatures[i]))
          return false;
      return true;
    }
    if (const auto* ga = std::get_if<GaTx>(&tx))
      return keys.verify(ga->aggregator, payload, ga->signature);
    const auto& pv = std::get<PvTx>(tx);
    return keys.verify(pv.submitter, payload, pv.signature);
  } catch (const InvalidInputError&) {
    return false;  // malformed shape or unregistered signer
  }
}

std::vector<std::uint8_t> header_bytes(const MABlockHeader& header) {
  ByteWriter w;
  w.put_u64(header.height);
  w.put_digest(header.prev_hash);
  w.put_u64(header.task_id);
  w.put_digest(header.global_result_ptr);
  w.put_digest(header.seed);
  w.put_digest(header.cvscript_ptr);
  w.put_digest(header.tx_merkle_root);
  return w.take();
}

Digest block_hash(const MABlock& block) {
  return sha256(header_bytes(block.header));
}

Digest election_seed(const Digest& prev_hash, std::uint64_t height) {
  ByteWriter w;
  w.put_digest(prev_hash);
  w.put_u64(height);
  return sha256(w.bytes());
}

Digest merkle_root(const std::vector<Transaction>& txs) {
  if (txs.empty()) return sha256(std::string_view{});
  std::vector<Digest> level;
  level.reserve(txs.size());
  for (const auto& tx : txs) level.push_back(tx_hash(tx));
  while (level.size() > 1) {
    if (level.size() % 2 != 0) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      ByteWriter w;
      w.put_digest(level[i]);
      w.put_digest(level[i + 1]);
      next.push_back(sha256(w.bytes()));
    }
    level = std::move(next);
  }
  return level.front();
}

std::vector<std::uint8_t> block_bytes(const MABlock& block) {
  ByteWriter w;
  auto header = header_bytes(block.header);
  w.put_bytes(header);
  w.put_u32(static_cast<std::uint32_t>(block.txs.size()));
  for (const auto& tx : block.txs) w.put_bytes(tx_bytes(tx));
  return w.take();
}

MABlock block_from_bytes(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  auto hb = r.get_bytes();
  ByteReader hr(hb);
  MABlock block;
  block.header.height = hr.get_u64();
  block.header.prev_hash = hr.get_digest();
  block.header.task_id = hr.get_u64();
  block.header.global_result_ptr = hr.get_digest();
  block.header.seed = hr.get_digest();
  block.header.cvscript_ptr = hr.get_digest();
  block.header.tx_merkle_root = hr.get_digest();
  hr.expect_end();
  auto n = r.get_u32();
  for (std::uint32_t i = 0; i < n; ++i)
    block.txs.push_back(tx_from_bytes(r.get_bytes()));
  r.expect_end();
  return block;
}

MABlock genesis_block() {
  MABlock g;
  g.header.height = 0;
  g.header.prev_hash = kNullDigest;
  g.header.task_id = 0;
  g.header.global_result_ptr = kNullDigest;
  g.header.seed = election_seed(kNullDigest, 0);
  g.header.cvscript_ptr = kNullDigest;
  g.header.tx_merkle_root = merkle_root({});
  return g;
}

Digest OffchainStore::put(std::span<const std::uint8_t> bytes) {
  Digest key = sha256(bytes);
  entries_.try_emplace(key, bytes.begin(), bytes.end());
  return key;
}

const std::vector<std::uint8_t>& OffchainStore::get(const Digest& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw NotFoundError("off-chain store: no entry for " + to_hex(key));
  return it->second;
}

void OffchainStore::persist(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [key, bytes] : entries_) {
    std::ofstream out(dir / to_hex(key), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw std::runtime_error("off-chain store: failed to write " +
                               to_hex(key));
  }
}

OffchainStore OffchainStore::load(const std::filesystem::path& dir) {
  OffchainStore store;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::vector<std::uint8_t> bytes(
        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Digest key = store.put(bytes);
    if (to_hex(key) != entry.path().filename().string())
      throw InvalidInputError("off-chain store: content of " +
                              entry.path().filename().string() +
                              " does not match its name");
  }
  return store;
}

std::string check_name(BlockCheck check) {
  switch (check) {
    case BlockCheck::ok: return "ok";
    case BlockCheck::bad_linkage: return "bad-linkage";
    case BlockCheck::bad_root: return "bad-root";
    case BlockCheck::bad_signature: return "bad-signature";
    case BlockCheck::dangling_pointer: return "dangling-pointer";
  }
  return "?";
}

MABlock build_block(std::uint64_t height, const MABlock& parent,
                    std::vector<Transaction> txs, TaskId task_id,
                    const Digest& global_result_ptr,
                    const Digest& cvscript_ptr, const KeyRegistry& keys) {
  for (std::size_t i = 0; i < txs.size(); ++i)
    if (!verify_tx(txs[i], keys))
      throw InvalidInputError("build_block: invalid transaction at index " +
                              std::to_string(i));
  MABlock block;
  block.header.height = height;
  block.header.prev_hash = block_hash(parent);
  block.header.task_id = task_id;
  block.header.global_result_ptr = global_result_ptr;
  block.header.seed = election_seed(block.header.prev_hash, height);
  block.header.cvscript_ptr = cvscript_ptr;
  block.header.tx_merkle_root = merkle_root(txs);
  block.txs = std::move(txs);
  return block;
}

namespace {

// Non-null pointers must resolve to stored bytes whose hash matches.
std::optional<std::string> check_pointer(const Digest& ptr,
                                         const OffchainStore& store,
                                         const std::string& what) {
  if (ptr.is_zero()) return std::nullopt;
  if (!store.contains(ptr)) return what + " does not resolve";
  if (sha256(store.get(ptr)) != ptr) return what + " content mismatch";
  return std::nullopt;
}

}  // namespace

ValidationResult validate_block(const MABlock& block, const MABlock& chain_tip,
                                const OffchainStore& store,
                                const KeyRegistry& keys) {
  const auto& h = block.header;
  if (h.height != chain_tip.header.height + 1)
    return {BlockCheck::bad_linkage,
            "height " + std::to_string(h.height) + " does not extend tip " +
                std::to_string(chain_tip.header.height)};
  if (h.prev_hash != block_hash(chain_tip))
    return {BlockCheck::bad_linkage, "prev_hash does not match tip hash"};
  if (h.seed != election_seed(h.prev_hash, h.height))
    return {BlockCheck::bad_linkage, "election seed mismatch"};
  if (h.tx_merkle_root != merkle_root(block.txs))
    return {BlockCheck::bad_root, "merkle root mismatch"};
  for (std::size_t i = 0; i < block.txs.size(); ++i)
    if (!verify_tx(block.txs[i], keys))
      return {BlockCheck::bad_signature,
              "transaction " + std::to_string(i) + " fails verification"};

  if (auto err = check_pointer(h.global_result_ptr, store, "global_result_ptr"))
    return {BlockCheck::dangling_pointer, *err};
  if (auto err = check_pointer(h.cvscript_ptr, store, "cvscript_ptr"))
    return {BlockCheck::dangling_pointer, *err};
  for (std::size_t i = 0; i < block.txs.size(); ++i) {
    const auto& tx = block.txs[i];
    std::optional<std::string> err;
    if (const auto* tr = std::get_if<TrTx>(&tx))
      err = check_pointer(tr->initial_model_ptr, store, "initial_model_ptr");
    else if (const auto* sa = std::get_if<SaTx>(&tx))
      err = check_pointer(sa->aggregate_ptr, store, "aggregate_ptr");
    else if (const auto* ga = std::get_if<GaTx>(&tx))
      err = check_pointer(ga->global_ptr, store, "global_ptr");
    else
      err = check_pointer(std::get<PvTx>(tx).verdict_ptr, store, "verdict_ptr");
    if (err)
      return {BlockCheck::dangling_pointer,
              "transaction " + std::to_string(i) + ": " + *err};
  }
  return {BlockCheck::ok, ""};
}

void Chain::append(MABlock block, const OffchainStore& store,
                   const KeyRegistry& keys) {
  auto result = validate_block(block, tip(), store, keys);
  if (!result.ok())
    throw InvalidInputError("chain append rejected (" +
                            check_name(result.check) + "): " + result.detail);
  blocks_.push_back(std::move(block));
}

ValidationResult Chain::validate_all(const OffchainStore& store,
                                     const KeyRegistry& keys) const {
  if (blocks_.empty() || block_hash(blocks_.front()) != block_hash(genesis_block()))
    return {BlockCheck::bad_linkage, "genesis block mismatch"};
  for (std::size_t i = 1; i < blocks_.size(); ++i) {
    auto result = validate_block(blocks_[i], blocks_[i - 1], store, keys);
    if (!result.ok()) {
      result.detail =
          "block " + std::to_string(i) + ": " + result.detail;
      return result;
    }
  }
  return {BlockCheck::ok, ""};
}

void Chain::export_records(std::ostream& out) const {
  for (const auto& block : blocks_) {
    out << "{\"height\":" << block.header.height << ",\"block_hash\":\""
        << to_hex(block_hash(block)) << "\",\"prev_hash\":\""
        << to_hex(block.header.prev_hash) << "\",\"tx_count\":"
        << block.txs.size() << ",\"tx_kinds\":[";
    for (std::size_t i = 0; i < block.txs.size(); ++i) {
      if (i) out << ",";
      out << "\"" << kind_name(kind_of(block.txs[i])) << "\"";
    }
    out << "]}\n";
  }
}

Hashchain::Hashchain(const Digest& seed, std::size_t n) : seed_(seed) {
  if (n < 1) throw InvalidInputError("hashchain: length must be >= 1");
  links_.reserve(n);
  Digest link = sha256(seed.bytes);  // h_0
  links_.push_back(link);
  for (std::size_t i = 1; i < n; ++i) {
    link = sha256(link.bytes);
    links_.push_back(link);
  }
}

Digest Hashchain::commit() {
  // The k-th commitment (1-based) is h_{n-1-k}; after n-1 commits only the
  // anchor's preimage chain is spent and further reveals would expose the
  // seed, which settlement handles out of band.
  if (revealed_ + 1 > links_.size() - 1)
    throw ExhaustedError("hashchain: all commitments revealed");
  ++revealed_;
  return links_[links_.size() - 1 - revealed_];
}

bool hashchain_settle(const Digest& anchor, const Digest& commitment,
                      std::size_t k) {
  Digest d = commitment;
  for (std::size_t i = 0; i < k; ++i) d = sha256(d.bytes);
  return d == anchor;
}

}  // namespace socialfl::ledger
