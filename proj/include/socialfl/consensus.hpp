#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "socialfl/common.hpp"
#include "socialfl/keys.hpp"
#include "socialfl/ledger.hpp"

namespace socialfl::consensus {

using ledger::MABlock;
using ledger::OffchainStore;
using ledger::TaskId;
using ledger::Transaction;

enum class ByzantineProfile { honest, silent, equivocator, invalid_proposer };

struct FullNode {
  NodeId id = 0;
  double reputation = 0.5;  // clamped to [0,1]
  ByzantineProfile profile = ByzantineProfile::honest;
};

struct ReputationParams {
  double delta1 = 0.05;  // reward increment
  double delta2 = 0.1;   // penalty decrement
  double r0 = 0.5;       // initial reputation
};

struct SortitionParams {
  double expected_committee = 10.0;  // k
  double quorum_fraction = 2.0 / 3.0;
  std::size_t max_retry_pairs = 3;  // R_max soft/cert vote pairs
};

// Stage indexing within a height: stage 0 is the proposal committee; attempt
// a in [0, R_max) uses soft stage 1+2a and cert stage 2+2a.
std::uint32_t soft_stage(std::size_t attempt);
std::uint32_t cert_stage(std::size_t attempt);

struct Vote {
  NodeId validator = 0;
  std::uint64_t height = 0;
  std::uint32_t stage = 0;
  Digest block_hash;  // kNullDigest votes for the empty block
  Digest signature;
};

std::vector<std::uint8_t> vote_signing_bytes(const Vote& vote);
Vote make_vote(NodeId validator, std::uint64_t height, std::uint32_t stage,
               const Digest& block_hash, const KeyRegistry& keys);
bool verify_vote(const Vote& vote, const KeyRegistry& keys);

// Signed-vote aggregate of one height; stored off-chain and pointed to by
// the next height's block header.
struct CVScript {
  std::uint64_t height = 0;
  std::vector<Vote> votes;  // ordered by (stage, validator, hash)
  Digest finalized_hash;    // kNullDigest for the empty block
};

std::vector<std::uint8_t> cvscript_bytes(const CVScript& script);
CVScript cvscript_from_bytes(std::span<const std::uint8_t> data);

// VRF stand-in: first 8 bytes of H(secret || seed || stage) as a uniform
// value in [0,1).  Verifiable by anyone holding the registry.
double vrf_value(const KeyRegistry::Secret& secret, const Digest& seed,
                 std::uint32_t stage);

struct CommitteeMember {
  NodeId id = 0;
  double priority = 0.0;  // the vrf value; lower proposes
};

// Node i self-elects iff vrf_i < k * r_i / sum_j r_j.  If nobody passes, the
// positive-reputation node with the lowest vrf value is seated so that every
// committee is non-empty (deterministic and equally re-checkable).
std::vector<CommitteeMember> sortition_elect(const std::vector<FullNode>& nodes,
                                             const KeyRegistry& keys,
                                             const Digest& seed,
                                             std::uint32_t stage,
                                             const SortitionParams& params);

// Re-checks a single membership claim against the registry.
bool sortition_verify(NodeId id, const std::vector<FullNode>& nodes,
                      const KeyRegistry& keys, const Digest& seed,
                      std::uint32_t stage, const SortitionParams& params);

// Filters the mempool to valid transactions and packages a candidate block.
// An invalid-proposer emits a candidate with a corrupted merkle root.
MABlock propose_candidate(const FullNode& validator,
                          const std::vector<Transaction>& mempool,
                          const MABlock& chain_tip, const OffchainStore& store,
                          const KeyRegistry& keys, TaskId task_id,
                          const Digest& cvscript_ptr);

struct Candidate {
  CommitteeMember proposer;
  MABlock block;
};

struct VoteOutcome {
  Digest decision;  // kNullDigest = empty block
  std::optional<MABlock> decided_block;
  CVScript script;
  // Height-local conclusions of honest nodes before certificate transfer;
  // kNullDigest entries mean the node saw no quorum.
  std::map<NodeId, Digest> local_decisions;
  std::uint32_t stages_used = 0;
  std::vector<std::size_t> committee_sizes;  // per stage, starting at stage 0
  bool safety_violation = false;
};

// Multi-stage agreement on the stage-0 leader (lowest proposer priority):
// per attempt, a soft-vote committee then a cert-vote committee are elected
// fresh; a node cert-votes the leader only after seeing a soft quorum in its
// own view; the leader is decided once some honest node sees a cert quorum.
// After R_max failed attempts the empty block is decided.  Equivocators sign
// two conflicting votes and deliver them to seeded halves of the network.
VoteOutcome run_multistage_vote(const std::vector<FullNode>& nodes,
                                const KeyRegistry& keys,
                                const std::vector<Candidate>& candidates,
                                const Digest& seed,
                                const SortitionParams& params,
                                std::uint64_t height, const MABlock& chain_tip,
                                const OffchainStore& store,
                                std::uint64_t master_seed,
                                std::size_t committee0_size);

// Reputation update from the vote script: consistent decision-matching
// voters gain delta1; equivocators and invalid proposers lose delta2 (once
// per height); results clamp to [0,1].  Votes with bad signatures throw.
std::map<NodeId, double> apply_reputation(
    const CVScript& script, const std::map<NodeId, bool>& proposal_validity,
    const std::map<NodeId, double>& reputations,
    const ReputationParams& params, const KeyRegistry& keys);

// Canonical bytes of a reputation table (sorted id/value pairs).
std::vector<std::uint8_t> reputation_table_bytes(
    const std::map<NodeId, double>& reputations);

struct NetworkState {
  std::vector<FullNode> nodes;
  KeyRegistry keys;
  ledger::Chain chain;
  OffchainStore store;
  std::vector<Transaction> mempool;  // consumed when a block is decided
  TaskId task_id = 1;
  Digest cvscript_ptr;  // script of the tip's height (null at genesis)
  std::uint64_t master_seed = 0;
  SortitionParams sortition;
  ReputationParams reputation;
};

struct HeightReport {
  std::uint64_t height = 0;
  Digest decided;  // kNullDigest = empty block
  bool empty_block = false;
  std::uint32_t stages_used = 0;
  std::vector<std::size_t> committee_sizes;
  std::size_t byz_count = 0;
  bool safety_violation = false;
  Digest reputation_table_digest;
};

// One full height: sortition, proposals, multi-stage vote, append (decided
// or deterministic empty block), CVScript + reputation table off-chain.
HeightReport run_height(NetworkState& state);

// Seeded byzantine assignment: count = round(fraction * n), profiles cycle
// silent -> equivocator -> invalid-proposer over a seeded node sample.
std::vector<FullNode> make_nodes(std::size_t n, double byz_fraction,
                                 double r0, std::uint64_t master_seed,
                                 NodeId id_base);

}  // namespace socialfl::consensus
