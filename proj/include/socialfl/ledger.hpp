#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "socialfl/common.hpp"
#include "socialfl/keys.hpp"

namespace socialfl::ledger {

using TaskId = std::uint64_t;

// FL task request: posted by the service provider to open a task.
struct TrTx {
  TaskId task_id = 0;
  double timestamp = 0.0;
  NodeId requester = 0;
  double task_reward = 0.0;
  Digest initial_model_ptr;        // off-chain pointer (may be null)
  double expected_performance = 1.0;  // quality target in (0,1]
  Digest signature;
};

// Social-layer aggregation: one per cluster per round, multi-signed by every
// member; the aggregate itself lives off-chain behind `aggregate_ptr`.
struct SaTx {
  TaskId task_id = 0;
  std::vector<NodeId> members;        // ascending, no duplicates
  Digest aggregate_ptr;
  std::vector<double> contributions;  // parallel to members, all > 0
  std::vector<Digest> signatures;     // parallel to members
};

// Global aggregation result for one round.
struct GaTx {
  TaskId task_id = 0;
  std::uint64_t round = 0;
  Digest global_ptr;
  NodeId aggregator = 0;
  Digest signature;
};

// Ownership-verification record: carries the digest of a canonical verdict
// record stored off-chain.
struct PvTx {
  TaskId task_id = 0;
  Digest verdict_ptr;
  NodeId submitter = 0;
  Digest signature;
};

using Transaction = std::variant<TrTx, SaTx, GaTx, PvTx>;

enum class TxKind : std::uint8_t { tr = 0, sa = 1, ga = 2, pv = 3 };

TxKind kind_of(const Transaction& tx);
std::string kind_name(TxKind kind);

// Canonical encoding: one kind byte, then fields in declared order.
std::vector<std::uint8_t> tx_bytes(const Transaction& tx);
Transaction tx_from_bytes(std::span<const std::uint8_t> data);
// Same encoding with all signature fields zeroed; this is what gets signed.
std::vector<std::uint8_t> tx_signing_bytes(const Transaction& tx);
Digest tx_hash(const Transaction& tx);

TrTx make_trtx(TaskId task_id, double timestamp, NodeId requester,
               double task_reward, const Digest& initial_model_ptr,
               double expected_performance, const KeyRegistry& keys);
SaTx make_satx(TaskId task_id, std::vector<NodeId> members,
               const Digest& aggregate_ptr, std::vector<double> contributions,
               const KeyRegistry& keys);
GaTx make_gatx(TaskId task_id, std::uint64_t round, const Digest& global_ptr,
               NodeId aggregator, const KeyRegistry& keys);
PvTx make_pvtx(TaskId task_id, const Digest& verdict_ptr, NodeId submitter,
               const KeyRegistry& keys);

// Shape and signature checks for a standalone transaction.
bool verify_tx(const Transaction& tx, const KeyRegistry& keys);

struct MABlockHeader {
  std::uint64_t height = 0;
  Digest prev_hash;
  TaskId task_id = 0;
  Digest global_result_ptr;  // null when the block carries no global result
  Digest seed;               // H(prev_hash || height): next election seed
  Digest cvscript_ptr;       // vote script of the parent height
  Digest tx_merkle_root;
};

struct MABlock {
  MABlockHeader header;
  std::vector<Transaction> txs;
};

std::vector<std::uint8_t> header_bytes(const MABlockHeader& header);
Digest block_hash(const MABlock& block);
Digest election_seed(const Digest& prev_hash, std::uint64_t height);

// Binary merkle tree over tx hashes; odd levels duplicate the last node;
// the empty list maps to H("").
Digest merkle_root(const std::vector<Transaction>& txs);

std::vector<std::uint8_t> block_bytes(const MABlock& block);
MABlock block_from_bytes(std::span<const std::uint8_t> data);

MABlock genesis_block();

// Content-addressed store standing in for the off-chain data warehouse.
class OffchainStore {
 public:
  Digest put(std::span<const std::uint8_t> bytes);
  const std::vector<std::uint8_t>& get(const Digest& key) const;
  bool contains(const Digest& key) const { return entries_.contains(key); }
  std::size_t size() const { return entries_.size(); }
  const std::map<Digest, std::vector<std::uint8_t>>& entries() const {
    return entries_;
  }
  // Fault-injection hook for tamper tests.
  std::map<Digest, std::vector<std::uint8_t>>& entries_mutable() {
    return entries_;
  }

  // One file per entry, named by the lowercase hex digest.
  void persist(const std::filesystem::path& dir) const;
  static OffchainStore load(const std::filesystem::path& dir);

 private:
  std::map<Digest, std::vector<std::uint8_t>> entries_;
};

enum class BlockCheck {
  ok,
  bad_linkage,
  bad_root,
  bad_signature,
  dangling_pointer,
};

struct ValidationResult {
  BlockCheck check = BlockCheck::ok;
  std::string detail;
  bool ok() const { return check == BlockCheck::ok; }
};

std::string check_name(BlockCheck check);

// Builds a child of `parent`; throws InvalidInputError naming the index of
// the first invalid transaction.
MABlock build_block(std::uint64_t height, const MABlock& parent,
                    std::vector<Transaction> txs, TaskId task_id,
                    const Digest& global_result_ptr,
                    const Digest& cvscript_ptr, const KeyRegistry& keys);

// Checks linkage against the tip, the merkle root, every signature, and
// that every non-null pointer resolves in the store to bytes matching its
// digest.  Returns the first failing check.
ValidationResult validate_block(const MABlock& block, const MABlock& chain_tip,
                                const OffchainStore& store,
                                const KeyRegistry& keys);

class Chain {
 public:
  Chain() : blocks_{genesis_block()} {}

  const MABlock& tip() const { return blocks_.back(); }
  std::uint64_t height() const { return blocks_.back().header.height; }
  const std::vector<MABlock>& blocks() const { return blocks_; }
  std::vector<MABlock>& blocks_mutable() { return blocks_; }  // tamper tests

  // Validates against the tip and appends.
  void append(MABlock block, const OffchainStore& store,
              const KeyRegistry& keys);

  // Walks the whole chain re-running every check.
  ValidationResult validate_all(const OffchainStore& store,
                                const KeyRegistry& keys) const;

  // Line-delimited export: height, block hash, prev hash, tx count, kinds.
  void export_records(std::ostream& out) const;

 private:
  std::vector<MABlock> blocks_;
};

// Payment hashchain: h_0 = H(seed), h_i = H(h_{i-1}), anchor = h_{n-1}.
// The k-th commit reveals h_{n-1-k}; settlement re-applies H k times.
class Hashchain {
 public:
  Hashchain(const Digest& seed, std::size_t n);

  const Digest& anchor() const { return links_.back(); }
  const Digest& seed() const { return seed_; }
  std::size_t length() const { return links_.size(); }
  std::size_t revealed() const { return revealed_; }

  // Returns the next commitment h_{n-1-k} for k = revealed()+1; the chain
  // is exhausted once every link below the anchor has been revealed.
  Digest commit();

 private:
  Digest seed_;
  std::vector<Digest> links_;
  std::size_t revealed_ = 0;
};

// True iff applying H to `commitment` k times yields `anchor`.
bool hashchain_settle(const Digest& anchor, const Digest& commitment,
                      std::size_t k);

}  // namespace socialfl::ledger
